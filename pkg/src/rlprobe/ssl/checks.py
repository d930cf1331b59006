"""Finite-difference checks of every self-prediction and auxiliary loss."""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterSet, Tape, Tensor, grad_check, ops
from ..autodiff.rng import substream
from .losses import barlow_balanced_loss, barlow_loss, byol_loss, inverse_dynamics_loss, kl_balanced

BARLOW_MUS = (0.0, 0.5, 0.7, 1.0)


def _params(rng, **shapes) -> ParameterSet:
    p = ParameterSet()
    for name, shape in shapes.items():
        p.add(name, rng.normal(size=shape))
    return p


def _gap(fn, oracle, params: ParameterSet) -> float:
    """Largest absolute difference between the gradients of ``fn`` and ``oracle``."""
    with Tape() as tape:
        loss = fn(params)
    g = tape.backward(loss)
    with Tape() as tape:
        ref = oracle(params)
    g_ref = tape.backward(ref)
    return max(float(np.abs(g.of(t) - g_ref.of(t)).max()) for _, t in params.items())


def loss_gradient_suite(rng: np.random.Generator, n_coords: int = 100, eps: float = 1e-5,
                        b: int = 8, k: int = 3, d: int = 6) -> dict[str, float]:
    """Worst relative error per loss over ``n_coords`` sampled coordinates.

    Stop-gradient inputs are passed as constants, so each check covers exactly
    the branches that receive gradient.
    """
    out = {}
    r = substream(rng, "byol")
    p = _params(r, y_hat=(b, k, d), q=(d, d))
    tgt = Tensor(r.normal(size=(b, k, d)))
    out["byol_loss"] = grad_check(lambda x: byol_loss(x["y_hat"], tgt, q=lambda y: y @ x["q"]), p, eps,
                                  n_coords, substream(r, "coords"))

    r = substream(rng, "barlow")
    p = _params(r, y_hat=(b, k, d), y_tilde=(b, k, d))
    out["barlow_loss"] = grad_check(lambda x: barlow_loss(x["y_hat"], x["y_tilde"]), p, eps, n_coords,
                                    substream(r, "coords"))

    for mu in BARLOW_MUS:
        r = substream(rng, "balanced", mu)
        y_hat, y_tilde = r.normal(size=(b, k, d)), r.normal(size=(b, k, d))
        # gradient reaching each branch is mu (resp. 1 - mu) times the plain one,
        # so the oracle differentiates mu * L(y_hat, c) + (1 - mu) * L(c', y_tilde)
        p = ParameterSet()
        p.add("y_hat", y_hat)
        p.add("y_tilde", y_tilde)
        ch, ct = Tensor(y_hat.copy()), Tensor(y_tilde.copy())

        def oracle(x, mu=mu, ch=ch, ct=ct):
            return mu * barlow_loss(x["y_hat"], ct) + (1.0 - mu) * barlow_loss(ch, x["y_tilde"])

        gap = _gap(lambda x, mu=mu: barlow_balanced_loss(x["y_hat"], x["y_tilde"], mu), oracle, p)
        out[f"barlow_balanced_loss[mu={mu}]"] = max(gap, grad_check(oracle, p, eps, n_coords,
                                                                    substream(r, "coords")))

    r = substream(rng, "inverse")
    hidden, n_actions = 7, 6
    p = _params(r, y_t=(b, d), y_next=(b, d), w1=(2 * d, hidden), b1=(hidden,), w2=(hidden, n_actions),
                b2=(n_actions,))
    acts = r.integers(0, n_actions, b)

    def head(x):
        return lambda a, c: ops.relu(ops.concat([a, c], axis=-1) @ x["w1"] + x["b1"]) @ x["w2"] + x["b2"]

    out["inverse_dynamics_loss"] = grad_check(
        lambda x: inverse_dynamics_loss(head(x), x["y_t"], x["y_next"], acts), p, eps, n_coords,
        substream(r, "coords"))

    r = substream(rng, "kl")
    post, prior = r.normal(size=(b, 4, 5)), r.normal(size=(b, 4, 5))
    p = ParameterSet()
    p.add("post", post)
    p.add("prior", prior)
    cpost, cprior, alpha = Tensor(post.copy()), Tensor(prior.copy()), 0.95

    def kl_oracle(x):
        return alpha * kl_balanced(cpost, x["prior"], 1.0) + (1 - alpha) * kl_balanced(x["post"], cprior, 0.0)

    gap = _gap(lambda x: kl_balanced(x["post"], x["prior"], alpha), kl_oracle, p)
    out["kl_balanced"] = max(gap, grad_check(kl_oracle, p, eps, n_coords, substream(r, "coords")))
    return out
