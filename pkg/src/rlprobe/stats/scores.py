"""Human-normalized scores and the two-stage aggregates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("iqm", "median")


def hns(raw, random, human):
    """``(raw - random) / (human - random)``; broadcasts over arrays."""
    random = np.asarray(random, dtype=np.float64)
    human = np.asarray(human, dtype=np.float64)
    if np.any(human == random):
        raise ValueError("human and random baselines coincide; normalized score undefined")
    out = (np.asarray(raw, dtype=np.float64) - random) / (human - random)
    return float(out) if out.ndim == 0 else out


def quartile_weights(n: int) -> np.ndarray:
    """Weight of each order statistic in the middle half ``[n/4, 3n/4]``.

    Order statistic ``i`` covers ``[i, i+1]``; its weight is the overlap with the
    middle half, so for ``n`` not divisible by 4 the boundary values count
    fractionally.
    """
    i = np.arange(n)
    lo, hi = n / 4.0, n - n / 4.0
    return np.clip(np.minimum(i + 1, hi) - np.maximum(i, lo), 0.0, 1.0)


def iqm(values, axis: int = -1) -> float | np.ndarray:
    """Interquartile mean: weighted mean of the middle half of the sorted sample."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[axis]
    if n == 0:
        raise ValueError("iqm of an empty sample")
    w = quartile_weights(n)
    s = np.moveaxis(np.sort(v, axis=axis), axis, -1)
    out = s @ w / w.sum()
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ScoreTable:
    """Raw per-seed scores per game plus the per-game baselines."""

    scores: dict  # game -> 1-D array of per-seed scores
    random: dict  # game -> float
    human: dict  # game -> float

    def __post_init__(self):
        self.scores = {g: np.asarray(v, dtype=np.float64).reshape(-1) for g, v in sorted(self.scores.items())}
        for g, v in self.scores.items():
            if v.size == 0:
                raise ValueError(f"game {g!r} has no seeds")
            if g not in self.random or g not in self.human:
                raise ValueError(f"game {g!r} has no baselines")
            if self.random[g] == self.human[g]:
                raise ValueError(f"game {g!r}: human and random baselines coincide")

    @property
    def games(self) -> list[str]:
        return list(self.scores)

    def normalized(self) -> dict:
        return {g: hns(v, self.random[g], self.human[g]) for g, v in self.scores.items()}


def per_game(norm: np.ndarray, kind: str, axis: int = -1):
    """First stage: IQM across seeds for ``iqm``, mean across seeds for ``median``."""
    if kind == "iqm":
        return iqm(norm, axis=axis)
    if kind == "median":
        return np.mean(norm, axis=axis)
    raise ValueError(f"unknown aggregate kind {kind!r}")


def across_games(values: np.ndarray, kind: str, axis: int = -1):
    """Second stage: mean across games for ``iqm``, median across games for ``median``."""
    if kind == "iqm":
        return np.mean(values, axis=axis)
    if kind == "median":
        return np.median(values, axis=axis)
    raise ValueError(f"unknown aggregate kind {kind!r}")


def aggregate(table: ScoreTable, kind: str = "iqm") -> float:
    norm = table.normalized()
    stage1 = np.array([per_game(v, kind) for v in norm.values()])
    return float(across_games(stage1, kind))
