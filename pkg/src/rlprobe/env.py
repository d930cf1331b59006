"""Desk-scale fruit-collection gridworld standing in for an Atari replay corpus.

The hidden state is an agent cell plus ``n_fruits`` fruit cells. Moving onto a
fruit eats it: the step whose observation shows agent and fruit overlapping
carries reward 1, and the fruit respawns elsewhere on the following step.
With stochastic dynamics fruits also random-walk. Frames render additively
(fruit 0.4, agent 0.6), so an overlap is a single 1.0 pixel. After eating, the
agent glows for ``glow_steps`` frames: a dim halo on its four neighbours.

Tuples follow the replay convention used throughout the package: step ``t``
holds the observation of state ``s_t``, the action executed from it, and the
reward that was collected on arriving in ``s_t``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff.rng import substream
from .data.containers import STACK, Corpus, Trajectory

AGENT_VALUE = 0.6
FRUIT_VALUE = 0.4
HALO_VALUE = 0.3
# action ids: 0 noop, 1 fire, 2 up, 3 right, 4 down, 5 left
MOVES = {2: (-1, 0), 3: (0, 1), 4: (1, 0), 5: (0, -1)}
# empirical collection rate of a random walker per fruit per cell, on 12x12
_RANDOM_RATE = 0.35


@dataclass(frozen=True)
class EnvSpec:
    height: int = 12
    width: int = 12
    n_actions: int = 6
    reward_fraction: float = 0.03
    sticky: bool = True
    sticky_prob: float = 0.25
    stochastic: bool = True
    drift_prob: float = 0.1
    render_noise: float = 0.02
    max_episode_len: int = 200
    glow_steps: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.reward_fraction < 0.5:
            raise ValueError("reward_fraction must lie in (0, 0.5)")
        if not 0.0 <= self.sticky_prob <= 1.0:
            raise ValueError("sticky_prob must lie in [0, 1]")
        if self.n_actions != 6:
            raise ValueError("the gridworld defines exactly 6 actions")
        if self.glow_steps < 0:
            raise ValueError("glow_steps must be >= 0")
        if self.height < 3 or self.width < 3:
            raise ValueError("grid must be at least 3x3")

    @property
    def n_fruits(self) -> int:
        cells = self.height * self.width
        n = round(self.reward_fraction * cells / _RANDOM_RATE)
        return int(min(max(n, 1), cells // 4))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PolicySpec:
    kind: str = "random"
    epsilon: float = 0.5

    def __post_init__(self):
        if self.kind not in ("random", "weak", "expert"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


@dataclass
class LatentState:
    agent: tuple[int, int]
    fruits: np.ndarray  # (n, 2) int
    eaten: np.ndarray = field(default=None)  # (n,) bool, True on the step a fruit is collected
    phase: int = 0
    glow: int = 0  # frames of halo left

    def __post_init__(self):
        self.fruits = np.asarray(self.fruits, dtype=np.int64).reshape(-1, 2)
        if self.eaten is None:
            self.eaten = np.zeros(len(self.fruits), dtype=bool)

    def copy(self) -> "LatentState":
        return LatentState(tuple(self.agent), self.fruits.copy(), self.eaten.copy(), self.phase, self.glow)

    def key(self) -> tuple:
        return (tuple(self.agent), tuple(map(tuple, self.fruits)), tuple(self.eaten), self.phase, self.glow)


def render(latent: LatentState, spec: EnvSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    frame = np.zeros((spec.height, spec.width), dtype=np.float64)
    for r, c in latent.fruits:
        frame[r, c] += FRUIT_VALUE
    frame[latent.agent] += AGENT_VALUE
    if latent.glow:
        ar, ac = latent.agent
        for dr, dc in MOVES.values():
            if 0 <= ar + dr < spec.height and 0 <= ac + dc < spec.width:
                frame[ar + dr, ac + dc] += HALO_VALUE
    if rng is not None and spec.render_noise > 0:
        frame += rng.normal(0.0, spec.render_noise, size=frame.shape)
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


def latent_features(latent: LatentState, spec: EnvSpec) -> np.ndarray:
    """Oracle encoding: agent one-hot, fruit occupancy, occupancy under the agent."""
    cells = spec.height * spec.width
    agent = np.zeros(cells)
    agent[latent.agent[0] * spec.width + latent.agent[1]] = 1.0
    fruit = np.zeros(cells)
    fruit[latent.fruits[:, 0] * spec.width + latent.fruits[:, 1]] = 1.0
    return np.concatenate([agent, fruit, [agent @ fruit]])


def _free_cells(spec: EnvSpec, occupied: set) -> list[tuple[int, int]]:
    return [(r, c) for r in range(spec.height) for c in range(spec.width) if (r, c) not in occupied]


def initial_state(spec: EnvSpec, rng: np.random.Generator) -> LatentState:
    cells = rng.choice(spec.height * spec.width, size=spec.n_fruits + 1, replace=False)
    pos = np.stack([cells // spec.width, cells % spec.width], axis=1)
    return LatentState((int(pos[0, 0]), int(pos[0, 1])), pos[1:])


def step(latent: LatentState, action: int, spec: EnvSpec, rng: np.random.Generator) -> tuple[LatentState, float]:
    """Advance one tick with an already sticky-resolved ``action``."""
    s = latent.copy()
    s.glow = spec.glow_steps if s.eaten.any() else max(s.glow - 1, 0)
    occupied = {tuple(f) for f in s.fruits} | {tuple(s.agent)}
    for i in np.flatnonzero(s.eaten):
        occupied.discard(tuple(s.fruits[i]))
        occupied.add(tuple(s.agent))
        free = _free_cells(spec, occupied)
        if spec.stochastic:
            cell = free[int(rng.integers(len(free)))]
        else:
            cell = free[(s.phase * 7919 + 104729 * (i + 1)) % len(free)]
        s.fruits[i] = cell
        occupied.add(cell)
    s.eaten[:] = False

    if spec.stochastic and spec.drift_prob > 0:
        for i in range(len(s.fruits)):
            if rng.random() < spec.drift_prob:
                dr, dc = MOVES[int(rng.integers(2, 6))]
                r, c = s.fruits[i, 0] + dr, s.fruits[i, 1] + dc
                if 0 <= r < spec.height and 0 <= c < spec.width and (r, c) not in occupied:
                    occupied.discard(tuple(s.fruits[i]))
                    s.fruits[i] = (r, c)
                    occupied.add((r, c))

    if action in MOVES:
        dr, dc = MOVES[action]
        r = min(max(s.agent[0] + dr, 0), spec.height - 1)
        c = min(max(s.agent[1] + dc, 0), spec.width - 1)
        s.agent = (r, c)
    hit = np.all(s.fruits == np.asarray(s.agent), axis=1)
    s.eaten = hit
    s.phase += 1
    return s, float(hit.sum())


def expert_action(latent: LatentState) -> int:
    """Greedy move toward the nearest uneaten fruit (Manhattan, lowest index on ties)."""
    live = np.flatnonzero(~latent.eaten)
    if live.size == 0:
        return 0
    ar, ac = latent.agent
    d = np.abs(latent.fruits[live, 0] - ar) + np.abs(latent.fruits[live, 1] - ac)
    tr, tc = latent.fruits[live[int(np.argmin(d))]]
    dr, dc = tr - ar, tc - ac
    if dr == 0 and dc == 0:
        return 0
    if abs(dr) >= abs(dc):
        return 4 if dr > 0 else 2
    return 3 if dc > 0 else 5


def choose_action(policy: PolicySpec, latent: LatentState, spec: EnvSpec, rng: np.random.Generator) -> int:
    if policy.kind == "random":
        return int(rng.integers(spec.n_actions))
    if policy.kind == "weak" and rng.random() < policy.epsilon:
        return int(rng.integers(spec.n_actions))
    return expert_action(latent)


def rollout(spec: EnvSpec, policy: PolicySpec, steps: int, rng: np.random.Generator,
            return_latents: bool = False):
    """One episode of ``steps`` steps; recorded actions are the executed ones."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dyn_rng = substream(rng, "dynamics")
    pol_rng = substream(rng, "policy")
    ren_rng = substream(rng, "render")
    latent = initial_state(spec, dyn_rng)
    latents, frames, actions, rewards = [], [], [], []
    reward = 0.0
    prev = None
    for t in range(steps):
        latents.append(latent)
        frames.append(render(latent, spec, ren_rng))
        a = choose_action(policy, latent, spec, pol_rng)
        if spec.sticky and prev is not None and pol_rng.random() < spec.sticky_prob:
            a = prev
        actions.append(a)
        rewards.append(reward)
        prev = a
        latent, reward = step(latent, a, spec, dyn_rng)
    frames = [frames[0]] * (STACK - 1) + frames
    traj = Trajectory(np.stack(frames), np.array(actions), np.array(rewards))
    return (traj, latents) if return_latents else traj


def generate_corpus(spec: EnvSpec, policy: PolicySpec, n_steps: int, role: str,
                    rng: np.random.Generator, game: str = "gridfruit") -> Corpus:
    if n_steps < spec.max_episode_len:
        raise ValueError(f"n_steps ({n_steps}) must cover one episode ({spec.max_episode_len})")
    trajs = []
    remaining, i = n_steps, 0
    while remaining > 0:
        t = min(spec.max_episode_len, remaining)
        trajs.append(rollout(spec, policy, t, substream(rng, "episode", i)))
        remaining -= t
        i += 1
    return Corpus(trajs, role, game, spec.n_actions)
