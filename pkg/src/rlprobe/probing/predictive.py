"""Reward probing of open-loop predicted embeddings."""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterSet
from ..autodiff.rng import substream
from ..data.containers import Corpus, FeatureSet, SplitSpec
from ..data.ops import binarize_reward, split
from ..ssl import networks as nets
from ..ssl.config import ModelConfig
from .linear import ProbeReport, fit_reward_probe


def prediction_features(params: ParameterSet, cfg: ModelConfig, corpus: Corpus, k: int,
                        rng: np.random.Generator, batch: int = 512) -> FeatureSet:
    """Features ``ê_{t+k}`` rolled out from ``e_t`` under the logged actions.

    Labels are the binarized rewards at ``t+k``. ``k = 0`` gives the encoder
    features ``e_t`` themselves.
    """
    if not 0 <= k <= cfg.transition.max_depth:
        raise ValueError(f"k must be in [0, {cfg.transition.max_depth}], got {k}")
    obs, acts, labels = [], [], []
    for tr in corpus:
        n = len(tr) - k
        if n <= 0:
            continue
        obs.append(tr.observations[:n])
        acts.append(np.stack([tr.actions[j:j + k] for j in range(n)]) if k else np.zeros((n, 0), np.int64))
        labels.append(binarize_reward(tr.rewards[k:k + n]))
    if not obs:
        raise ValueError(f"no trajectory is longer than k={k}")
    obs, acts, labels = np.concatenate(obs), np.concatenate(acts), np.concatenate(labels)
    out = np.empty((len(obs), cfg.encoder.dim))
    for c, s in enumerate(range(0, len(obs), batch)):
        e = nets.encode(params, cfg.encoder, obs[s:s + batch].astype(np.float64))
        if k:
            roll = nets.rollout_predictions(params, cfg, e, acts[s:s + batch].astype(np.int64),
                                            rng=substream(rng, "rollout", c))
            e = roll.predictions[k - 1]
        out[s:s + batch] = e.data
    return FeatureSet(out.astype(np.float32), labels.astype(np.int64), "reward-binary", game=corpus.game,
                      meta={"k": k})


def probe_predictions(params: ParameterSet, cfg: ModelConfig, corpus: Corpus, k: int,
                      rng: np.random.Generator, split_spec: SplitSpec = SplitSpec(),
                      model_id: str = "model") -> ProbeReport:
    """Fit a reward probe on ``k``-step predictions and report its eval-split F1."""
    fs = prediction_features(params, cfg, corpus, k, rng)
    train, ev = split(fs, split_spec)
    probe = fit_reward_probe(train)
    return ProbeReport(model_id, f"reward-pred-{k}", {corpus.game: probe.score(ev)},
                       dict(probe.diagnostics), {"k": k})
