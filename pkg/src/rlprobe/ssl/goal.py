"""Proximity reward toward a goal embedding and goal sampling."""

from __future__ import annotations

import numpy as np


def _cos(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise FloatingPointError("goal_reward: zero-norm vector")
    return (a * b).sum(axis=-1) / (na * nb)


def proximity(e: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``exp(2 cos(e, g) - 2)``, in ``[e^-4, 1]``."""
    return np.exp(2.0 * _cos(np.asarray(e, float), np.asarray(g, float)) - 2.0)


def goal_reward(e_t, e_next, g):
    """Decrease in proximity to ``g`` is penalized: ``d(e_t, g) - d(e_next, g)``."""
    r = proximity(e_t, g) - proximity(e_next, g)
    return float(r) if np.ndim(r) == 0 else r


def sample_goal(embeddings: np.ndarray, t: int, rng: np.random.Generator, horizon: int = 50,
                cross_prob: float = 0.2, noise_max: float = 0.5,
                alpha: float | np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw one goal per trajectory from future encodings of a ``(B, T, d)`` batch.

    Each goal is the encoding at a uniformly drawn step in ``(t, t + horizon]``
    (clamped to the sequence), taken with probability ``cross_prob`` from a
    different trajectory of the batch. It is then mixed with unit-norm Gaussian
    noise, ``g = alpha * n + (1 - alpha) * g`` with ``alpha ~ U(0, noise_max)``
    unless ``alpha`` is given. Returns the goals and the cross-trajectory mask.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 3 or emb.shape[0] == 0:
        raise ValueError(f"embeddings must be a non-empty (B, T, d) batch, got {emb.shape}")
    b, T, d = emb.shape
    if not 0 <= t < T:
        raise ValueError(f"t={t} outside the sequence of length {T}")
    lo, hi = min(t + 1, T - 1), min(t + horizon, T - 1)
    step = rng.integers(lo, hi + 1, size=b)
    cross = rng.random(b) < cross_prob if b > 1 else np.zeros(b, dtype=bool)
    other = (np.arange(b) + rng.integers(1, max(b, 2), size=b)) % b
    src = np.where(cross, other, np.arange(b))
    g = emb[src, step]
    n = rng.standard_normal((b, d))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    a = rng.uniform(0.0, noise_max, size=b) if alpha is None else np.broadcast_to(alpha, (b,))
    return a[:, None] * n + (1.0 - a[:, None]) * g, cross
