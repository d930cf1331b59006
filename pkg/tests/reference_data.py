"""Published (probe F1, RL IQM) pairs and baseline rows used as fixed test inputs."""

REWARD_F1 = [56.2, 52.7, 64.9, 62.2, 63.4, 67.4, 67.7, 69.0, 70.3]
RL_IQM = [0.3, 0.24, 0.34, 0.35, 0.37, 0.5, 0.83, 0.58, 0.96]

# the same models plus a collapsed one
REWARD_F1_10 = [25.9] + REWARD_F1
RL_IQM_10 = [0.01] + RL_IQM
ACTION_F1_10 = [5.9, 24.4, 24.8, 22.7, 26.87, 23.2, 26.2, 25.8, 27.7, 26.74]

# game: (random, human, M-CD-ByGI raw score)
BOXING = (0.1, 12.1, 54.5)
