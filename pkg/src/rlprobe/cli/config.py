"""Run configuration: a YAML file with nested sections, validated into plain objects."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from ..env import EnvSpec, PolicySpec
from ..ssl.config import ModelConfig, TrainConfig

SECTIONS = ("env", "data", "models", "probing", "stats")
DATA_ROLES = ("pretrain", "reward-probe", "action-probe")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (exit code 2)."""


def _known(section: str, doc: dict, allowed) -> None:
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"{section}: unknown field(s) {', '.join(extra)}")


def _require(section: str, doc: dict, name: str):
    if name not in doc:
        raise ConfigError(f"{section}: missing required field '{name}'")
    return doc[name]


@dataclass(frozen=True)
class CorpusPlan:
    policy: PolicySpec
    steps: int


@dataclass(frozen=True)
class Variant:
    name: str
    model: ModelConfig
    train: TrainConfig


@dataclass(frozen=True)
class ProbeSettings:
    l2: float = 1e-5
    max_iter: int = 300
    tol: float = 1e-6
    train_fraction: float = 0.8
    split_seed: int = 0
    pred_k: tuple[int, ...] = (5, 10)
    focal_gamma: float = 2.0
    action_lr: float = 0.2
    action_batch_size: int = 256
    action_weight_decay: float = 1e-6
    action_epochs: int = 12
    action_step_size: int = 10
    action_step_gamma: float = 0.1


@dataclass(frozen=True)
class StatsSettings:
    bootstrap_replicates: int = 10000
    n_perm: int = 50000
    level: float = 0.95
    kind: str = "iqm"
    scores: str | None = None
    baselines: str | None = None


@dataclass
class RunConfig:
    env: EnvSpec
    data: dict[str, CorpusPlan]
    variants: dict[str, Variant]
    probing: ProbeSettings
    stats: StatsSettings
    seed: int = 0
    out: str = "run"
    threads: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    def checksum(self) -> str:
        """Digest of everything that shapes the outputs (threads excluded)."""
        doc = {k: v for k, v in self.raw.items() if k not in ("threads", "out")}
        doc["seed"] = self.seed
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def default_config_text() -> str:
    return resources.files("rlprobe.cli").joinpath("default.yaml").read_text()


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _known("config", doc, SECTIONS + ("seed", "out", "threads"))
    for s in SECTIONS:
        _require("config", doc, s)
    try:
        env = EnvSpec(**doc["env"])
    except TypeError as e:
        raise ConfigError(f"env: {e}") from None

    data = {}
    _known("data", doc["data"], DATA_ROLES)
    for role in DATA_ROLES:
        d = _require("data", doc["data"], role)
        _known(f"data.{role}", d, ("policy", "epsilon", "steps"))
        policy = PolicySpec(_require(f"data.{role}", d, "policy"), d.get("epsilon", 0.5))
        data[role] = CorpusPlan(policy, int(_require(f"data.{role}", d, "steps")))

    models = doc["models"]
    if not isinstance(models, dict) or not models:
        raise ConfigError("models: at least one named variant is required")
    variants = {}
    for name, m in models.items():
        m = dict(m or {})
        _known(f"models.{name}", m, ("encoder", "transition", "loss", "train"))
        train = TrainConfig.from_dict(m.pop("train", None))
        variants[str(name)] = Variant(str(name), ModelConfig.from_dict(m), train)

    _known("probing", doc["probing"], ProbeSettings.__dataclass_fields__)
    probing = dict(doc["probing"])
    if "pred_k" in probing:
        probing["pred_k"] = tuple(int(k) for k in probing["pred_k"])
    _known("stats", doc["stats"], StatsSettings.__dataclass_fields__)
    stats = StatsSettings(**doc["stats"])
    for key in ("scores", "baselines"):
        path = getattr(stats, key)
        if path is not None:
            full = Path(path) if base_dir is None or Path(path).is_absolute() else base_dir / path
            if not full.exists():
                raise ConfigError(f"stats.{key}: file not found: {path}")
            stats = StatsSettings(**{**stats.__dict__, key: str(full)})
    return RunConfig(env, data, variants, ProbeSettings(**probing), stats, int(doc.get("seed", 0)),
                     str(doc.get("out", "run")), int(doc.get("threads", 1)), doc)


def load_config(path: str | Path | None) -> RunConfig:
    """Parse ``path``, or the packaged default when ``path`` is None."""
    if path is None:
        return parse_config(yaml.safe_load(default_config_text()))
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{p}: {e}") from None
    try:
        return parse_config(doc, p.parent)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
