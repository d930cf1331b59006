"""Recipe configuration for self-predictive pretraining."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

OBJECTIVES = ("byol", "barlow")
TARGET_MODES = ("ema", "shared", "frozen-random")
VARIANTS = ("conv-det", "gru-det", "gru-latent")

# Dimensions of the full-size setup, kept for reference next to the desk defaults.
FULL_SCALE = {
    "encoder_channels": (32, 64, 64),
    "embedding_layout": (64, 7, 7),
    "projection_dim": 1024,
    "inverse_hidden": 256,
    "conv_det_channels": 64,
    "gru_hidden": 600,
    "gru_input": 250,
    "latent_vars": 32,
    "latent_classes": 32,
    "prediction_depth": 10,
    "frame": (84, 84),
}


def _from_dict(cls, doc: dict | None):
    doc = dict(doc or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ValueError(f"{cls.__name__}: unknown field(s) {', '.join(unknown)}")
    for k, v in doc.items():
        if isinstance(v, list):
            doc[k] = tuple(v)
    return cls(**doc)


@dataclass(frozen=True)
class EncoderConfig:
    channels: tuple[int, ...] = (8, 16, 16)
    strides: tuple[int, ...] = (2, 1, 1)
    kernel: int = 3
    frame: tuple[int, int] = (12, 12)
    stack: int = 4

    def __post_init__(self):
        if len(self.channels) != len(self.strides) or not self.channels:
            raise ValueError("channels and strides must be non-empty and equally long")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")

    @property
    def out_shape(self) -> tuple[int, int, int]:
        h, w = self.frame
        for s in self.strides:
            h, w = -(-h // s), -(-w // s)
        return self.channels[-1], h, w

    @property
    def dim(self) -> int:
        c, h, w = self.out_shape
        return c * h * w

    to_dict = asdict
    from_dict = classmethod(_from_dict)


@dataclass(frozen=True)
class TransitionConfig:
    variant: str = "gru-latent"
    hidden: int = 64
    action_embed: int = 32
    latent_vars: int = 8
    latent_classes: int = 8
    conv_channels: int = 16
    max_depth: int = 10
    n_actions: int = 6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown transition variant {self.variant!r}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    to_dict = asdict
    from_dict = classmethod(_from_dict)


@dataclass(frozen=True)
class LossConfig:
    objective: str = "barlow"
    target_mode: str = "shared"
    projection_dim: int = 64
    depth: int = 5
    barlow_mu: float = 0.7
    barlow_lambda: float = 0.0051
    barlow_weight: float = 0.002
    byol_weight: float = 1.0
    byol_tau: float = 0.99
    inverse: bool = True
    inverse_weight: float = 1.0
    inverse_hidden: int = 32
    goal: bool = False
    goal_weight: float = 1.0
    goal_horizon: int = 50
    goal_cross_prob: float = 0.2
    goal_noise_max: float = 0.5
    kl_weight: float = 0.1
    kl_balance: float = 0.95

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        if self.objective == "byol" and self.target_mode != "ema":
            raise ValueError("byol requires target_mode 'ema'")
        if self.objective == "barlow" and self.target_mode == "ema":
            raise ValueError("barlow requires target_mode 'shared' or 'frozen-random'")
        for name in ("barlow_mu", "byol_tau", "kl_balance", "goal_cross_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    to_dict = asdict
    from_dict = classmethod(_from_dict)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 6
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1.5e-4
    max_grad_norm: float = 10.0
    crop_pad: int = 1
    jitter: float = 0.05
    max_batches_per_epoch: int = 0  # 0 = one pass over the windows

    to_dict = asdict
    from_dict = classmethod(_from_dict)


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    transition: TransitionConfig = field(default_factory=TransitionConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.loss.depth > self.transition.max_depth:
            raise ValueError("loss depth exceeds the transition's max_depth")

    def to_dict(self) -> dict:
        return {"encoder": asdict(self.encoder), "transition": asdict(self.transition),
                "loss": asdict(self.loss)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        doc = dict(doc or {})
        unknown = sorted(set(doc) - {"encoder", "transition", "loss"})
        if unknown:
            raise ValueError(f"ModelConfig: unknown field(s) {', '.join(unknown)}")
        return cls(EncoderConfig.from_dict(doc.get("encoder")),
                   TransitionConfig.from_dict(doc.get("transition")),
                   LossConfig.from_dict(doc.get("loss")))
