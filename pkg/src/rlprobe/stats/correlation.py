"""Spearman rank correlation and its one-tailed permutation test."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..autodiff.rng import substream
from .bootstrap import _map_chunks

CHUNK = 1000


def _ranks(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"spearman needs two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise ValueError(f"spearman needs n >= 3, got {len(x)}")
    for name, v in (("x", x), ("y", y)):
        if np.all(v == v[0]):
            raise ValueError(f"spearman undefined: {name} is constant")
    return rankdata(x), rankdata(y)


def _from_ranks(rx: np.ndarray, ry: np.ndarray) -> float:
    n = len(rx)
    if np.unique(rx).size == n and np.unique(ry).size == n:
        d = rx - ry
        return float(1.0 - 6.0 * (d @ d) / (n * (n * n - 1)))
    a, b = rx - rx.mean(), ry - ry.mean()
    return float((a @ b) / np.sqrt((a @ a) * (b @ b)))


def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties."""
    return _from_ranks(*_ranks(x, y))


def perm_test(x, y, n_perm: int = 50000, rng: np.random.Generator | None = None,
              threads: int = 1) -> float:
    """One-tailed p for ``rho >= observed`` under independent shuffles of both vectors.

    Returns ``(count + 1) / (n_perm + 1)``. Comparisons use the integer statistic
    ``sum(2 rx * 2 ry)``, which orders permutations exactly as rho does.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    rx, ry = _ranks(x, y)
    ix = np.rint(2 * rx).astype(np.int64)
    iy = np.rint(2 * ry).astype(np.int64)
    observed = int(ix @ iy)
    rng = rng if rng is not None else np.random.default_rng(0)

    def work(chunk, size):
        r = substream(rng, "chunk", chunk)
        px = r.permuted(np.broadcast_to(ix, (size, len(ix))), axis=1)
        py = r.permuted(np.broadcast_to(iy, (size, len(iy))), axis=1)
        return int(np.count_nonzero(np.einsum("ij,ij->i", px, py) >= observed))

    count = sum(_map_chunks(work, n_perm, threads))
    return (count + 1) / (n_perm + 1)


@dataclass
class CorrelationReport:
    task: str
    models: list
    probe_f1: list
    rl: list
    rho: float
    p: float
    n_perm: int

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.rho <= 1.0 + 1e-12:
            raise ValueError(f"rho outside [-1, 1]: {self.rho}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p outside (0, 1]: {self.p}")

    to_dict = asdict


def correlate(task: str, models, probe_f1, rl, n_perm: int = 50000, rng: np.random.Generator | None = None,
              threads: int = 1) -> CorrelationReport:
    """Spearman and permutation p for paired per-model values, ordered by model id."""
    order = np.argsort(np.asarray(models, dtype=str), kind="stable")
    models = [str(models[i]) for i in order]
    if len(set(models)) != len(models):
        raise ValueError("duplicate model ids")
    f = [float(probe_f1[i]) for i in order]
    r = [float(rl[i]) for i in order]
    rho = spearman(f, r)
    p = perm_test(f, r, n_perm, rng, threads)
    return CorrelationReport(task, models, f, r, rho, p, n_perm)
