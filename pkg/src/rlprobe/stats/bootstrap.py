"""Stratified percentile bootstrap and CI width versus number of runs.

Replicates are generated in fixed-size chunks, each from its own substream
keyed by the chunk index, so results do not depend on the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff.rng import substream
from .scores import ScoreTable, aggregate, across_games, per_game

CHUNK = 1000


@dataclass
class AggregateReport:
    kind: str
    point: float
    lo: float
    hi: float
    replicates: int
    level: float

    def __post_init__(self):
        # percentile bands can miss the point estimate by float rounding only
        if not self.lo - 1e-12 <= self.point <= self.hi + 1e-12:
            raise ValueError(f"point {self.point} outside CI [{self.lo}, {self.hi}]")

    to_dict = asdict


def _chunks(replicates: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, replicates - c * CHUNK)) for c in range(-(-replicates // CHUNK))]


def _map_chunks(fn, replicates: int, threads: int) -> list:
    jobs = _chunks(replicates)
    if threads <= 1 or len(jobs) == 1:
        return [fn(c, n) for c, n in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _uniforms(rng: np.random.Generator, chunk: int, size: int, n_games: int, n_max: int) -> np.ndarray:
    """Common random numbers: ``(size, games, n_max)`` uniforms for one chunk."""
    return substream(rng, "chunk", chunk).random((size, n_games, n_max))


def _resampled_stats(norm: list[np.ndarray], u: np.ndarray, k: int | None, kind: str) -> np.ndarray:
    stage1 = np.empty(u.shape[:2])
    for gi, v in enumerate(norm):
        take = len(v) if k is None else k
        idx = np.minimum((u[:, gi, :take] * len(v)).astype(np.int64), len(v) - 1)
        stage1[:, gi] = per_game(v[idx], kind, axis=1)
    return across_games(stage1, kind, axis=1)


def _band(stats: np.ndarray, level: float) -> tuple[float, float]:
    a = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [a, 100.0 - a])
    return float(lo), float(hi)


def bootstrap_replicates(table: ScoreTable, kind: str, replicates: int, rng: np.random.Generator,
                         k: int | None = None, threads: int = 1) -> np.ndarray:
    norm = list(table.normalized().values())
    n_max = max(len(v) for v in norm) if k is None else k

    def work(chunk, size):
        return _resampled_stats(norm, _uniforms(rng, chunk, size, len(norm), n_max), k, kind)

    return np.concatenate(_map_chunks(work, replicates, threads))


def stratified_bootstrap_ci(table: ScoreTable, kind: str = "iqm", replicates: int = 10000,
                            level: float = 0.95, rng: np.random.Generator | None = None,
                            threads: int = 1) -> AggregateReport:
    """Resample seeds with replacement within each game; percentile interval."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    point = aggregate(table, kind)
    stats = bootstrap_replicates(table, kind, replicates, rng, threads=threads)
    lo, hi = _band(stats, level)
    # a percentile band of a degenerate resample can differ from the point by rounding
    lo, hi = min(lo, point), max(hi, point)
    return AggregateReport(kind, point, lo, hi, replicates, level)


def ci_vs_runs(table: ScoreTable, ks, replicates: int = 10000, rng: np.random.Generator | None = None,
               level: float = 0.95, threads: int = 1) -> dict[int, tuple[float, float]]:
    """IQM band when only ``k`` runs per game are available, for each ``k`` in ``ks``.

    All ``k`` share one set of uniforms, so ``k`` equal to the seed count of
    every game reproduces :func:`stratified_bootstrap_ci` on the same stream.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    ks = [int(k) for k in np.atleast_1d(ks)]
    n_max = max(len(v) for v in table.scores.values())
    if any(not 1 <= k <= n_max for k in ks):
        raise ValueError(f"k must lie in [1, {n_max}], got {ks}")
    norm = list(table.normalized().values())

    def work(chunk, size):
        u = _uniforms(rng, chunk, size, len(norm), n_max)
        return np.stack([_resampled_stats(norm, u, k, "iqm") for k in ks], axis=1)

    stats = np.concatenate(_map_chunks(work, replicates, threads))
    return {k: _band(stats[:, i], level) for i, k in enumerate(ks)}
