from .config import (
    FULL_SCALE,
    EncoderConfig,
    LossConfig,
    ModelConfig,
    TrainConfig,
    TransitionConfig,
)
from .goal import goal_reward, proximity, sample_goal
from .losses import (
    barlow_balanced_loss,
    barlow_loss,
    byol_loss,
    categorical_kl,
    cross_correlation,
    inverse_dynamics_loss,
    kl_balanced,
)
from .networks import encode, init_model, rollout_predictions
from .pretrain import DivergenceError, PretrainResult, embed_corpus, embedding_std, pretrain
