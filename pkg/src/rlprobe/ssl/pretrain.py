"""Joint training of encoder, projector, transition model and auxiliary heads."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import ParameterSet, Tape, Tensor, ema_update, ops, optimizer_step
from ..autodiff.rng import substream
from ..data.containers import Corpus
from ..data.ops import intensity_jitter, random_crop
from . import networks as nets
from .config import ModelConfig, TrainConfig
from .goal import goal_reward, sample_goal
from .losses import barlow_balanced_loss, byol_loss, inverse_dynamics_loss, kl_balanced

log = logging.getLogger(__name__)

TARGET_PREFIXES = ("enc/", "proj/")


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, step: int):
        super().__init__(f"pretraining diverged: non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


def _view(params: ParameterSet, prefixes=TARGET_PREFIXES) -> ParameterSet:
    out = ParameterSet()
    for k, t in params.items():
        if k.startswith(prefixes):
            out.tensors[k] = t
    return out


def make_target(params: ParameterSet, cfg: ModelConfig, rng: np.random.Generator) -> ParameterSet | None:
    """Target encoder+projector: EMA copy, independent frozen init, or None when shared."""
    mode = cfg.loss.target_mode
    if mode == "shared":
        return None
    if mode == "ema":
        return _view(params).copy(requires_grad=False)
    fresh = nets.init_model(cfg, substream(rng, "frozen-target"))
    return _view(fresh).copy(requires_grad=False)


@dataclass
class PretrainResult:
    params: ParameterSet
    target: ParameterSet | None
    config: ModelConfig
    train: TrainConfig
    curves: dict = field(default_factory=dict)

    def curves_json(self) -> str:
        doc = {"model": self.config.to_dict(), "train": self.train.to_dict(), "curves": self.curves}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def windows(corpus: Corpus, length: int, phase: int) -> np.ndarray:
    """``(trajectory, start)`` pairs of non-overlapping windows of ``length`` steps."""
    out = []
    for i, tr in enumerate(corpus):
        starts = np.arange(phase % length, len(tr) - length + 1, length)
        out.append(np.stack([np.full(len(starts), i), starts], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=int)


def gather(corpus: Corpus, picks: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    obs = np.stack([corpus.trajectories[i].observations[s:s + length] for i, s in picks])
    act = np.stack([corpus.trajectories[i].actions[s:s + length - 1] for i, s in picks])
    return obs.astype(np.float64), act.astype(np.int64)


def ssl_loss(params: ParameterSet, target: ParameterSet | None, cfg: ModelConfig, obs_online: np.ndarray,
             obs_target: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> tuple[Tensor, dict]:
    """Total loss on one batch of windows.

    ``obs_online`` is ``(B, 4, H, W)`` at the window start, ``obs_target`` is
    ``(B, K+1, 4, H, W)`` and ``actions`` is ``(B, K)``.
    """
    lc = cfg.loss
    b, kp1 = obs_target.shape[:2]
    k = kp1 - 1
    tgt = params if target is None else target
    e0 = nets.encode(params, cfg.encoder, obs_online)
    et = nets.encode(tgt, cfg.encoder, obs_target.reshape((b * kp1,) + obs_target.shape[2:]))
    et = ops.reshape(et, (b, kp1, -1))
    y_tgt = nets.project(tgt, et)  # (B, K+1, p)

    future = [ops.stop_gradient(et[:, j + 1]) for j in range(k)]
    roll = nets.rollout_predictions(params, cfg, e0, actions, rng=substream(rng, "latent"),
                                    targets=future if cfg.transition.variant == "gru-latent" else None)
    y_hat = nets.project(params, ops.stack(roll.predictions, axis=1))
    y_next = y_tgt[:, 1:]
    parts = {}
    if lc.objective == "byol":
        parts["pred"] = byol_loss(y_hat, y_next, q=lambda y: nets.dense(params, "pred", y))
        total = lc.byol_weight * parts["pred"]
    else:
        parts["pred"] = barlow_balanced_loss(y_hat, y_next, lc.barlow_mu, lc.barlow_lambda)
        total = lc.barlow_weight * parts["pred"]

    y0 = nets.project(params, e0)
    if lc.inverse:
        parts["inverse"] = inverse_dynamics_loss(lambda a, c: nets.inverse_logits(params, a, c),
                                                 y0, y_tgt[:, 1], actions[:, 0])
        total = total + lc.inverse_weight * parts["inverse"]
    if roll.post_logits:
        parts["kl"] = kl_balanced(ops.stack(roll.post_logits, axis=1), ops.stack(roll.prior_logits, axis=1),
                                  lc.kl_balance)
        total = total + lc.kl_weight * parts["kl"]
    if lc.goal:
        yt = y_tgt.data
        g, _ = sample_goal(yt, 0, substream(rng, "goal"), lc.goal_horizon, lc.goal_cross_prob,
                           lc.goal_noise_max)
        r = goal_reward(yt[:, 0], yt[:, 1], g)
        x = ops.concat([y0, ops.one_hot(actions[:, 0], cfg.transition.n_actions), Tensor(g)], axis=-1)
        err = ops.reshape(nets.dense(params, "goal", x), (b,)) - r
        parts["goal"] = ops.mean(err * err)
        total = total + lc.goal_weight * parts["goal"]
    return total, {name: float(v.data) for name, v in parts.items()}


def pretrain(corpus: Corpus, cfg: ModelConfig, train: TrainConfig, rng: np.random.Generator,
             params: ParameterSet | None = None) -> PretrainResult:
    """Train for ``train.epochs`` passes; deterministic given ``rng``'s address."""
    if corpus.role != "pretrain":
        raise ValueError(f"pretraining needs a 'pretrain' corpus, got {corpus.role!r}")
    if cfg.transition.n_actions < corpus.n_actions:
        raise ValueError("corpus has more actions than the transition model")
    if params is None:
        params = nets.init_model(cfg, substream(rng, "init"))
    target = make_target(params, cfg, rng)
    length = cfg.loss.depth + 1
    hyper = {"lr": train.lr, "beta1": train.beta1, "beta2": train.beta2, "eps": train.eps,
             "max_grad_norm": train.max_grad_norm}
    curves: dict[str, list[float]] = {"total": []}
    for epoch in range(train.epochs):
        erng = substream(rng, "epoch", epoch)
        win = windows(corpus, length, int(erng.integers(length)))
        win = win[erng.permutation(len(win))]
        n_batches = len(win) // train.batch_size
        if train.max_batches_per_epoch:
            n_batches = min(n_batches, train.max_batches_per_epoch)
        if n_batches == 0:
            raise ValueError("corpus too small for one batch of windows")
        sums: dict[str, float] = {}
        for step in range(n_batches):
            srng = substream(erng, "step", step)
            obs, act = gather(corpus, win[step * train.batch_size:(step + 1) * train.batch_size], length)
            online = intensity_jitter(random_crop(obs[:, 0], train.crop_pad, substream(srng, "crop-o")),
                                      train.jitter, substream(srng, "jit-o"))
            flat = obs.reshape((-1,) + obs.shape[2:])
            tview = intensity_jitter(random_crop(flat, train.crop_pad, substream(srng, "crop-t")),
                                     train.jitter, substream(srng, "jit-t")).reshape(obs.shape)
            with Tape() as tape:
                loss, parts = ssl_loss(params, target, cfg, online, tview, act, srng)
            if not np.isfinite(loss.data):
                raise DivergenceError(epoch, step)
            grads = tape.backward(loss)
            if not optimizer_step("adam", params, params.grads_from(grads), hyper):
                raise DivergenceError(epoch, step)
            if cfg.loss.target_mode == "ema":
                ema_update(target, _view(params), cfg.loss.byol_tau)
            for name, v in {"total": float(loss.data), **parts}.items():
                sums[name] = sums.get(name, 0.0) + v
        for name, v in sums.items():
            curves.setdefault(name, []).append(v / n_batches)
        log.info("epoch %d: %s", epoch, {k: round(v[-1], 5) for k, v in curves.items()})
    return PretrainResult(params, target, cfg, train, curves)


def embed_corpus(params: ParameterSet, cfg: ModelConfig, corpus: Corpus, batch: int = 512) -> np.ndarray:
    """Frozen encoder features of every step, ``(n_steps, D)``; no augmentation."""
    obs = corpus.all_observations()
    out = np.empty((len(obs), cfg.encoder.dim))
    for s in range(0, len(obs), batch):
        out[s:s + batch] = nets.encode(params, cfg.encoder, obs[s:s + batch].astype(np.float64)).data
    return out


def embedding_std(params: ParameterSet, cfg: ModelConfig, corpus: Corpus, n: int = 1024) -> float:
    """Mean over dimensions of the across-sample std of encoder outputs."""
    obs = corpus.all_observations()[:n].astype(np.float64)
    e = nets.encode(params, cfg.encoder, obs).data
    return float(e.std(axis=0).mean())
