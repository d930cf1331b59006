"""Encoder, projector and the three transition models, as functions of a ParameterSet.

Parameters live under path prefixes (``enc/``, ``proj/``, ``pred/``, ``trans/``,
``inv/``, ``goal/``) so that target networks can be built from subsets.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterSet, ShapeError, Tensor, ops
from ..autodiff.rng import substream
from .config import EncoderConfig, ModelConfig, TransitionConfig


def _dense(params: ParameterSet, path: str, n_in: int, n_out: int, rng, gain: float = 1.0):
    params.add(f"{path}/w", rng.normal(0.0, gain / np.sqrt(n_in), size=(n_in, n_out)))
    params.add(f"{path}/b", np.zeros(n_out))


def dense(params: ParameterSet, path: str, x: Tensor) -> Tensor:
    return ops.matmul(x, params[f"{path}/w"]) + params[f"{path}/b"]


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    xc = x - ops.mean(x, axis=-1, keepdims=True)
    var = ops.mean(xc * xc, axis=-1, keepdims=True)
    return xc / ops.sqrt(var + eps)


# ---------------------------------------------------------------- encoder

def init_encoder(params: ParameterSet, cfg: EncoderConfig, rng: np.random.Generator,
                 prefix: str = "enc") -> None:
    c_in = cfg.stack
    for i, c_out in enumerate(cfg.channels):
        fan_in = c_in * cfg.kernel * cfg.kernel
        params.add(f"{prefix}/conv{i}/w",
                   rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, cfg.kernel, cfg.kernel)))
        params.add(f"{prefix}/conv{i}/b", np.zeros(c_out))
        c_in = c_out


def encode_spatial(params: ParameterSet, cfg: EncoderConfig, obs, prefix: str = "enc") -> Tensor:
    x = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=np.float64))
    want = (cfg.stack,) + tuple(cfg.frame)
    if x.ndim != 4 or x.shape[1:] != want:
        raise ShapeError(f"encode: expected (B, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
    last = len(cfg.channels) - 1
    for i, s in enumerate(cfg.strides):
        x = ops.conv2d(x, params[f"{prefix}/conv{i}/w"], params[f"{prefix}/conv{i}/b"], stride=s)
        if i < last:
            x = ops.relu(x)
    return x


def encode(params: ParameterSet, cfg: EncoderConfig, obs, prefix: str = "enc") -> Tensor:
    """Flattened embedding ``(B, D)`` of a batch of frame stacks."""
    x = encode_spatial(params, cfg, obs, prefix)
    return ops.reshape(x, (x.shape[0], -1))


# ------------------------------------------------------- projector and heads

def init_heads(params: ParameterSet, cfg: ModelConfig, rng: np.random.Generator) -> None:
    d, p = cfg.encoder.dim, cfg.loss.projection_dim
    _dense(params, "proj", d, p, substream(rng, "proj"))
    if cfg.loss.objective == "byol":
        _dense(params, "pred", p, p, substream(rng, "pred"))
    if cfg.loss.inverse:
        h = cfg.loss.inverse_hidden
        r = substream(rng, "inv")
        _dense(params, "inv/l1", 2 * p, h, r, gain=np.sqrt(2.0))
        _dense(params, "inv/l2", h, cfg.transition.n_actions, r)
    if cfg.loss.goal:
        _dense(params, "goal", p + p + cfg.transition.n_actions, 1, substream(rng, "goal"))


def project(params: ParameterSet, e: Tensor, prefix: str = "proj") -> Tensor:
    return dense(params, prefix, e)


def inverse_logits(params: ParameterSet, y_t: Tensor, y_next: Tensor) -> Tensor:
    h = ops.relu(dense(params, "inv/l1", ops.concat([y_t, y_next], axis=-1)))
    return dense(params, "inv/l2", h)


# ------------------------------------------------------------- transitions

def init_transition(params: ParameterSet, cfg: ModelConfig, rng: np.random.Generator) -> None:
    t = cfg.transition
    d = cfg.encoder.dim
    if t.variant == "conv-det":
        c = cfg.encoder.out_shape[0]
        k = cfg.encoder.kernel
        for i, (c_in, c_out) in enumerate([(c + t.n_actions, t.conv_channels), (t.conv_channels, c)]):
            fan_in = c_in * k * k
            params.add(f"trans/conv{i}/w", rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, k, k)))
            params.add(f"trans/conv{i}/b", np.zeros(c_out))
        return
    r = substream(rng, "gru")
    h = t.hidden
    _dense(params, "trans/init", d, h, r)
    if t.variant == "gru-det":
        params.add("trans/embed", r.normal(0.0, 1.0, size=(t.n_actions, t.action_embed)))
        n_in = t.action_embed
    else:
        z = t.latent_vars * t.latent_classes
        _dense(params, "trans/inp", z + t.n_actions, t.action_embed, r)
        n_in = t.action_embed
        _dense(params, "trans/post1", h + d, h, r, gain=np.sqrt(2.0))
        _dense(params, "trans/post2", h, z, r)
        _dense(params, "trans/prior1", h, h, r, gain=np.sqrt(2.0))
        _dense(params, "trans/prior2", h, z, r)
        _dense(params, "trans/merge", h + z, d, r)
    for gate in ("z", "r", "n"):
        _dense(params, f"trans/gru_x{gate}", n_in, h, r)
        _dense(params, f"trans/gru_h{gate}", h, h, r)
    if t.variant == "gru-det":
        _dense(params, "trans/out", h, d, r)


def gru_cell(params: ParameterSet, x: Tensor, h: Tensor) -> Tensor:
    z = ops.sigmoid(dense(params, "trans/gru_xz", x) + dense(params, "trans/gru_hz", h))
    r = ops.sigmoid(dense(params, "trans/gru_xr", x) + dense(params, "trans/gru_hr", h))
    n = ops.tanh(dense(params, "trans/gru_xn", x) + r * dense(params, "trans/gru_hn", h))
    return (1.0 - z) * n + z * h


class Rollout:
    """Result of unrolling a transition model: ``predictions[k]`` is (B, D)."""

    def __init__(self):
        self.predictions: list[Tensor] = []
        self.post_logits: list[Tensor] = []
        self.prior_logits: list[Tensor] = []


def _latent_logits(params: ParameterSet, t: TransitionConfig, which: str, x: Tensor) -> Tensor:
    h = ops.elu(dense(params, f"trans/{which}1", x))
    logits = dense(params, f"trans/{which}2", h)
    return ops.reshape(logits, (logits.shape[0], t.latent_vars, t.latent_classes))


def rollout_predictions(params: ParameterSet, cfg: ModelConfig, e0: Tensor, actions: np.ndarray,
                        rng: np.random.Generator | None = None, targets: list | None = None) -> Rollout:
    """Unroll ``K = actions.shape[1]`` steps from the embedding ``e0``.

    For ``gru-latent`` the latent at step k comes from the posterior when
    ``targets[k]`` (the encoded observation at t+k+1) is given, and from the
    prior otherwise. ``rng`` drives the categorical samples.
    """
    t = cfg.transition
    actions = np.asarray(actions, dtype=np.int64)
    if actions.ndim != 2 or actions.shape[0] != e0.shape[0]:
        raise ShapeError(f"actions must be (B, K) with B={e0.shape[0]}, got {actions.shape}")
    k_steps = actions.shape[1]
    if not 1 <= k_steps <= t.max_depth:
        raise ValueError(f"rollout depth {k_steps} outside [1, {t.max_depth}]")
    if actions.min() < 0 or actions.max() >= t.n_actions:
        raise ValueError("action id out of range")
    out = Rollout()
    b = e0.shape[0]

    if t.variant == "conv-det":
        c, hh, ww = cfg.encoder.out_shape
        e = ops.reshape(e0, (b, c, hh, ww))
        for k in range(k_steps):
            planes = np.zeros((b, t.n_actions, hh, ww))
            planes[np.arange(b), actions[:, k]] = 1.0
            x = ops.concat([e, Tensor(planes)], axis=1)
            x = ops.relu(ops.conv2d(x, params["trans/conv0/w"], params["trans/conv0/b"]))
            e = ops.conv2d(x, params["trans/conv1/w"], params["trans/conv1/b"])
            out.predictions.append(ops.reshape(e, (b, -1)))
        return out

    h = ops.elu(dense(params, "trans/init", e0))
    if t.variant == "gru-det":
        for k in range(k_steps):
            x = layer_norm(ops.index(params["trans/embed"], actions[:, k]))
            h = gru_cell(params, x, h)
            out.predictions.append(dense(params, "trans/out", h))
        return out

    if rng is None:
        raise ValueError("gru-latent rollouts need an rng stream for latent samples")
    nz = t.latent_vars * t.latent_classes
    post0 = _latent_logits(params, t, "post", ops.concat([h, e0], axis=-1))
    z = ops.reshape(ops.straight_through_sample(post0, rng), (b, nz))
    for k in range(k_steps):
        x = ops.elu(dense(params, "trans/inp", ops.concat([z, ops.one_hot(actions[:, k], t.n_actions)],
                                                           axis=-1)))
        h = gru_cell(params, layer_norm(x), h)
        prior = _latent_logits(params, t, "prior", h)
        out.prior_logits.append(prior)
        if targets is not None and targets[k] is not None:
            post = _latent_logits(params, t, "post", ops.concat([h, targets[k]], axis=-1))
            out.post_logits.append(post)
            logits = post
        else:
            logits = prior
        z = ops.reshape(ops.straight_through_sample(logits, rng), (b, nz))
        out.predictions.append(dense(params, "trans/merge", ops.concat([h, z], axis=-1)))
    return out


def init_model(cfg: ModelConfig, rng: np.random.Generator) -> ParameterSet:
    params = ParameterSet()
    init_encoder(params, cfg.encoder, substream(rng, "encoder"))
    init_heads(params, cfg, substream(rng, "heads"))
    init_transition(params, cfg, substream(rng, "transition"))
    return params
