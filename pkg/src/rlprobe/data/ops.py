"""Label construction, splitting and the pretraining-only augmentations."""

from __future__ import annotations

import numpy as np

from ..autodiff.rng import stream
from .containers import Corpus, FeatureSet, SplitSpec


def binarize_reward(r) -> int | np.ndarray:
    """Indicator of a strictly positive reward."""
    if np.ndim(r) == 0:
        return int(float(r) > 0.0)
    return (np.asarray(r) > 0.0).astype(np.int64)


def _quota(counts: np.ndarray, fraction: float, total: int) -> np.ndarray:
    # largest-remainder apportionment so the overall train size is round(f * N)
    target = min(max(int(np.floor(fraction * total + 0.5)), 1), total - 1)
    exact = counts * fraction
    base = np.floor(exact).astype(int)
    extra = target - base.sum()
    order = np.lexsort((np.arange(len(counts)), -(exact - base)))
    base[order[:extra]] += 1
    return base


def split_indices(labels: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stratified random partition of ``range(len(labels))``."""
    labels = np.asarray(labels)
    n = len(labels)
    if n < 5:
        raise ValueError(f"need at least 5 samples to split, got {n}")
    rng = stream(spec.seed, "split")
    classes, inverse = np.unique(labels, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(classes))
    quota = _quota(counts, spec.train_fraction, n)
    train, held = [], []
    for c in range(len(classes)):
        idx = np.flatnonzero(inverse == c)
        idx = idx[rng.permutation(len(idx))]
        train.append(idx[:quota[c]])
        held.append(idx[quota[c]:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(held))


def split(obj, spec: SplitSpec = SplitSpec()):
    """Split a FeatureSet (stratified by label) or a Corpus (by trajectory)."""
    if isinstance(obj, FeatureSet):
        tr, ev = split_indices(obj.labels, spec)
        return obj.take(tr, "train"), obj.take(ev, "eval")
    if isinstance(obj, Corpus):
        tr, ev = split_indices(np.zeros(len(obj), dtype=int), spec)
        make = lambda idx: Corpus([obj.trajectories[i] for i in idx], obj.role, obj.game, obj.n_actions)
        return make(tr), make(ev)
    raise TypeError(f"cannot split {type(obj).__name__}")


def random_crop(obs: np.ndarray, pad: int, rng: np.random.Generator, return_offsets: bool = False):
    """Replicate-pad each stack by ``pad`` and crop back at a uniform offset.

    Accepts a single ``(4, H, W)`` stack or a batch ``(B, 4, H, W)``; all frames
    of one stack share the offset.
    """
    if pad < 0:
        raise ValueError("pad must be non-negative")
    single = obs.ndim == 3
    batch = obs[None] if single else obs
    b, _, h, w = batch.shape
    offsets = rng.integers(0, 2 * pad + 1, size=(b, 2))
    if pad == 0:
        out = batch.copy()
    else:
        padded = np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
        rows = offsets[:, 0, None] + np.arange(h)[None]
        cols = offsets[:, 1, None] + np.arange(w)[None]
        out = padded[np.arange(b)[:, None, None, None], np.arange(batch.shape[1])[None, :, None, None],
                     rows[:, None, :, None], cols[:, None, None, :]]
    out = out[0] if single else out
    return (out, offsets) if return_offsets else out


def intensity_jitter(obs: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Multiply each stack by ``1 + scale * clip(N(0, 1), -2, 2)``."""
    if scale < 0:
        raise ValueError("scale must be non-negative")
    single = obs.ndim == 3
    batch = obs[None] if single else obs
    eps = np.clip(rng.standard_normal(batch.shape[0]), -2.0, 2.0)
    out = batch * (1.0 + scale * eps)[:, None, None, None]
    out = out.astype(obs.dtype, copy=False)
    return out[0] if single else out
