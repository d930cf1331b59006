"""Self-prediction objectives and auxiliary losses.

Sequence inputs are ``(B, K, d)`` tensors: batch, prediction step, feature.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..autodiff import ShapeError, Tensor, ops


def _check_pair(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes differ {a.shape} and {b.shape}")
    if a.ndim != 3:
        raise ShapeError(f"{name}: expected (B, K, d), got {a.shape}")


def byol_loss(y_hat: Tensor, y_tilde: Tensor, q: Callable[[Tensor], Tensor] | None = None) -> Tensor:
    """``-sum_k cos(q(y_hat_k), stop(y_tilde_k))``, averaged over the batch."""
    _check_pair("byol_loss", y_hat, y_tilde)
    pred = q(y_hat) if q is not None else y_hat
    cos = ops.cosine_similarity(pred, ops.stop_gradient(y_tilde), axis=-1)  # (B, K)
    return -ops.sum(ops.mean(cos, axis=0))


def cross_correlation(y_hat: Tensor, y_tilde: Tensor) -> Tensor:
    """Correlation matrix of the two branches, samples pooled over batch and time."""
    _check_pair("cross_correlation", y_hat, y_tilde)
    b, k, d = y_hat.shape
    n = b * k
    if n < 2:
        raise ValueError("cross-correlation needs at least 2 samples over batch x time")
    za = ops.standardize(ops.reshape(y_hat, (n, d)), axis=0)
    zb = ops.standardize(ops.reshape(y_tilde, (n, d)), axis=0)
    return ops.matmul(ops.transpose(za), zb) / float(n)


def barlow_loss(y_hat: Tensor, y_tilde: Tensor, lam: float = 0.0051) -> Tensor:
    """``sum_i (1 - C_ii)^2 + lam * sum_{i != j} C_ij^2``."""
    c = cross_correlation(y_hat, y_tilde)
    d = c.shape[0]
    eye = np.eye(d)
    on = ops.sum(ops.power(1.0 - c * eye, 2.0) * eye)
    off = ops.sum((c * c) * (1.0 - eye))
    return on + lam * off


def barlow_balanced_loss(y_hat: Tensor, y_tilde: Tensor, mu: float = 0.7, lam: float = 0.0051) -> Tensor:
    """``mu * L(y_hat, stop y_tilde) + (1 - mu) * L(stop y_hat, y_tilde)``.

    Both terms share one value, so the forward pass is ``L`` itself and ``mu``
    only splits the gradient between the two branches.
    """
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    return barlow_loss(ops.scale_gradient(y_hat, mu), ops.scale_gradient(y_tilde, 1.0 - mu), lam)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    logp = ops.log_softmax(logits, axis=-1)
    return -ops.mean(ops.sum(logp * ops.one_hot(labels, logits.shape[-1]), axis=-1))


def inverse_dynamics_loss(head: Callable[[Tensor, Tensor], Tensor], y_t: Tensor, y_next: Tensor,
                          actions: np.ndarray) -> Tensor:
    """Cross-entropy of ``head(y_t, y_next)`` against the action taken between them."""
    if y_t.shape != y_next.shape:
        raise ShapeError(f"inverse_dynamics_loss: shapes differ {y_t.shape} and {y_next.shape}")
    return cross_entropy(head(y_t, y_next), np.asarray(actions))


def categorical_kl(p_logits: Tensor, q_logits: Tensor) -> Tensor:
    """KL(p || q) per leading index, summed over latent variables: (..., V, C) -> (...)."""
    lp = ops.log_softmax(p_logits, axis=-1)
    lq = ops.log_softmax(q_logits, axis=-1)
    kl = ops.sum(ops.exp(lp) * (lp - lq), axis=-1)
    return ops.sum(kl, axis=-1)


def kl_balanced(post_logits: Tensor, prior_logits: Tensor, alpha: float = 0.95) -> Tensor:
    """``alpha * KL(stop post || prior) + (1 - alpha) * KL(post || stop prior)``, batch mean."""
    if post_logits.shape != prior_logits.shape:
        raise ShapeError(f"kl_balanced: shapes differ {post_logits.shape} and {prior_logits.shape}")
    to_prior = categorical_kl(ops.stop_gradient(post_logits), prior_logits)
    to_post = categorical_kl(post_logits, ops.stop_gradient(prior_logits))
    return ops.mean(alpha * to_prior + (1.0 - alpha) * to_post)
