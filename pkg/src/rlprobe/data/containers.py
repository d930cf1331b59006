from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

STACK = 4
ROLES = ("pretrain", "reward-probe", "action-probe")
LABEL_KINDS = ("reward-binary", "action-id")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Step:
    observation: np.ndarray  # (4, H, W) float32 in [0, 1]
    action: int
    reward: float


class Trajectory:
    """An episode stored as a frame sequence; observations are 4-frame stacks.

    ``frames`` holds ``T + 3`` frames: the first three are the history padding
    for step 0, so ``observations[t] == frames[t:t + 4]``.
    """

    def __init__(self, frames: np.ndarray, actions: np.ndarray, rewards: np.ndarray):
        frames = np.asarray(frames, dtype=np.float32)
        actions = np.asarray(actions, dtype=np.int32)
        rewards = np.asarray(rewards, dtype=np.float32)
        if frames.ndim != 3:
            raise ValueError(f"frames must be (T+3, H, W), got {frames.shape}")
        t = len(actions)
        if t < 1 or frames.shape[0] != t + STACK - 1 or rewards.shape != (t,):
            raise ValueError(f"inconsistent trajectory: {frames.shape[0]} frames, "
                             f"{t} actions, {rewards.shape[0]} rewards")
        if np.any(actions < 0):
            raise ValueError("actions must be non-negative ids")
        self.frames = _frozen(frames)
        self.actions = _frozen(actions)
        self.rewards = _frozen(rewards)

    @classmethod
    def from_stacks(cls, observations: np.ndarray, actions, rewards) -> "Trajectory":
        obs = np.asarray(observations, dtype=np.float32)
        if obs.ndim != 4 or obs.shape[1] != STACK:
            raise ValueError(f"observations must be (T, 4, H, W), got {obs.shape}")
        if obs.shape[0] > 1 and not np.array_equal(obs[1:, :STACK - 1], obs[:-1, 1:]):
            raise ValueError("observation stacks do not come from one frame sequence")
        frames = np.concatenate([obs[0], obs[1:, -1]], axis=0)
        return cls(frames, actions, rewards)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    @property
    def observations(self) -> np.ndarray:
        win = sliding_window_view(self.frames, STACK, axis=0)  # (T, H, W, 4)
        return np.moveaxis(win, -1, 1)

    def __getitem__(self, t: int) -> Step:
        return Step(self.observations[t], int(self.actions[t]), float(self.rewards[t]))

    @property
    def steps(self) -> list[Step]:
        return [self[t] for t in range(len(self))]


@dataclass
class Corpus:
    trajectories: list[Trajectory]
    role: str
    game: str = "gridfruit"
    n_actions: int = 6

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown corpus role {self.role!r}")
        for tr in self.trajectories:
            if len(tr) and int(tr.actions.max()) >= self.n_actions:
                raise ValueError("action id exceeds the environment action count")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def all_observations(self) -> np.ndarray:
        return np.concatenate([t.observations for t in self.trajectories], axis=0)

    def all_actions(self) -> np.ndarray:
        return np.concatenate([t.actions for t in self.trajectories])

    def all_rewards(self) -> np.ndarray:
        return np.concatenate([t.rewards for t in self.trajectories])


@dataclass
class FeatureSet:
    embeddings: np.ndarray  # (N, D) float32
    labels: np.ndarray  # (N,) int
    label_kind: str
    game: str = "gridfruit"
    split: str = "train"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != self.labels.shape[0]:
            raise ValueError(f"embeddings {self.embeddings.shape} do not match "
                             f"{self.labels.shape[0]} labels")
        if self.label_kind not in LABEL_KINDS:
            raise ValueError(f"unknown label kind {self.label_kind!r}")
        if self.label_kind == "reward-binary" and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("reward-binary labels must be 0 or 1")
        if self.split not in ("train", "eval"):
            raise ValueError(f"unknown split tag {self.split!r}")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray, split: str) -> "FeatureSet":
        return FeatureSet(self.embeddings[idx], self.labels[idx], self.label_kind,
                          self.game, split, dict(self.meta))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
