"""Linear probes on frozen features.

Both probes work on features standardized with training-set statistics; the
affine map is folded back into the stored weights, so a fitted
:class:`LinearProbe` applies directly to raw embeddings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ..autodiff import ParameterSet, Tape, Tensor, ops, optimizer_step
from ..autodiff.rng import stream
from ..data.containers import FeatureSet
from .metrics import binary_f1, multiclass_weighted_f1


@dataclass
class LinearProbe:
    weight: np.ndarray  # (classes, D)
    bias: np.ndarray  # (classes,)
    label_kind: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weight = np.atleast_2d(np.asarray(self.weight, dtype=np.float64))
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError("weight rows and bias length differ")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise FloatingPointError("probe weights are not finite")
        if self.label_kind == "reward-binary" and self.weight.shape[0] != 2:
            raise ValueError("a reward probe has exactly 2 classes")

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weight.T + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        if self.label_kind == "reward-binary":
            # class-1 probability >= 0.5  <=>  logit margin >= 0
            return (z[:, 1] - z[:, 0] >= 0.0).astype(np.int64)
        return np.argmax(z, axis=1).astype(np.int64)

    def score(self, fs: FeatureSet) -> float:
        pred = self.predict(fs.embeddings)
        if fs.label_kind == "reward-binary":
            return binary_f1(pred, fs.labels)
        return multiclass_weighted_f1(pred, fs.labels)


class _Scaler:
    """Per-column standardization; ``unit_rows`` further scales rows to unit mean square norm."""

    def __init__(self, x: np.ndarray, unit_rows: bool = False):
        self.mu = x.mean(axis=0)
        sd = x.std(axis=0)
        self.sd = np.where(sd > 1e-12 * (1.0 + np.abs(self.mu)), sd, 1.0)
        if unit_rows:
            self.sd = self.sd * np.sqrt(x.shape[1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mu) / self.sd

    def fold(self, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w_raw = w / self.sd.reshape((-1,) + (1,) * (w.ndim - 1))
        return w_raw, b - self.mu @ w_raw


def _logistic_objective(theta, x, s, l2):
    w, b = theta[:-1], theta[-1]
    z = x @ w + b
    n = len(s)
    loss = np.logaddexp(0.0, -s * z).mean() + 0.5 * l2 * (w @ w)
    coef = -s * expit(-s * z) / n
    grad = np.empty_like(theta)
    grad[:-1] = x.T @ coef + l2 * w
    grad[-1] = coef.sum()
    return loss, grad


def reward_probe_loss(probe: LinearProbe, fs: FeatureSet, l2: float = 1e-5) -> float:
    """Regularized objective of ``probe`` on ``fs`` in the probe's standardized frame."""
    scaler = _Scaler(fs.embeddings.astype(np.float64))
    w_raw = probe.weight[1] - probe.weight[0]
    b_raw = probe.bias[1] - probe.bias[0]
    w = w_raw * scaler.sd
    b = b_raw + w_raw @ scaler.mu
    s = 2.0 * fs.labels - 1.0
    return float(_logistic_objective(np.r_[w, b], scaler(fs.embeddings.astype(np.float64)), s, l2)[0])


def _logistic_hessian(theta, x, l2):
    z = x @ theta[:-1] + theta[-1]
    p = expit(z)
    xa = np.c_[x, np.ones(len(x))]
    h = (xa * (p * (1.0 - p) / len(x))[:, None]).T @ xa
    idx = np.arange(x.shape[1])
    h[idx, idx] += l2
    return h


def fit_reward_probe(train: FeatureSet, l2: float = 1e-5, max_iter: int = 300, tol: float = 1e-6,
                     init: np.random.Generator | None = None, init_scale: float = 0.1) -> LinearProbe:
    """L2-regularized logistic regression by full-batch trust-region Newton.

    Stops once the gradient norm is at most ``tol`` (so its infinity-norm is too)
    or after ``max_iter`` iterations. ``init`` draws a random starting point; the
    default is zero.
    """
    if train.label_kind != "reward-binary":
        raise ValueError(f"reward probe needs reward-binary labels, got {train.label_kind}")
    if np.unique(train.labels).size < 2:
        raise ValueError("reward probe needs both classes in the training set")
    x64 = train.embeddings.astype(np.float64)
    scaler = _Scaler(x64)
    x = scaler(x64)
    s = 2.0 * train.labels - 1.0
    d = x.shape[1]
    theta0 = np.zeros(d + 1)
    if init is not None:
        theta0 = init.normal(0.0, init_scale, size=d + 1)
    # Nearly separable features make the optimum large-norm and ill-conditioned under the
    # weak L2 term; curvature-exact steps converge where quasi-Newton updates stall.
    res = minimize(_logistic_objective, theta0, args=(x, s, l2), jac=True,
                   hess=lambda th, *a: _logistic_hessian(th, x, l2), method="trust-exact",
                   options={"maxiter": max_iter, "gtol": tol})
    loss, grad = _logistic_objective(res.x, x, s, l2)
    w, b = scaler.fold(res.x[:-1], np.array(res.x[-1]))
    diag = {"solver": "trust-newton", "iterations": int(res.nit), "final_loss": float(loss),
            "grad_inf_norm": float(np.abs(grad).max()),
            "converged": bool(np.abs(grad).max() <= tol), "l2": l2}
    return LinearProbe(np.stack([np.zeros_like(w), w]), np.array([0.0, float(b)]),
                       "reward-binary", diag)


def fit_reward_regression(train: FeatureSet, rewards: np.ndarray, l2: float = 1e-5) -> LinearProbe:
    """Ridge regression of the raw reward; positive prediction when the fit is >= 0.5."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != (len(train),):
        raise ValueError("one reward per feature row is required")
    x64 = train.embeddings.astype(np.float64)
    scaler = _Scaler(x64)
    x = scaler(x64)
    n, d = x.shape
    # centered design: the intercept is the reward mean
    a = x.T @ x / n + l2 * np.eye(d)
    w = np.linalg.solve(a, x.T @ (r - r.mean()) / n)
    w_raw, b = scaler.fold(w, np.array(r.mean()))
    resid = x @ w + r.mean() - r
    diag = {"solver": "ridge", "mse": float(resid @ resid / n), "l2": l2}
    # fold the 0.5 threshold into the two-class layout used by predict()
    return LinearProbe(np.stack([np.zeros_like(w_raw), w_raw]), np.array([0.0, float(b) - 0.5]),
                       "reward-binary", diag)


def focal_loss(logits: Tensor, labels: np.ndarray, gamma: float = 2.0) -> Tensor:
    """Mean softmax focal loss ``-(1 - p_y)^gamma * log p_y``."""
    logp = ops.log_softmax(logits, axis=-1)
    mask = ops.one_hot(labels, logits.shape[-1])
    logp_y = ops.sum(logp * mask, axis=-1)
    if gamma == 0:
        return -ops.mean(logp_y)
    weight = ops.power(1.0 - ops.exp(logp_y), gamma)
    return -ops.mean(weight * logp_y)


def fit_action_probe(train: FeatureSet, n_classes: int | None = None, gamma: float = 2.0,
                     lr: float = 0.2, batch_size: int = 256, weight_decay: float = 1e-6,
                     epochs: int = 12, step_size: int = 10, step_gamma: float = 0.1,
                     seed: int = 0) -> LinearProbe:
    """Softmax focal-loss head trained with mini-batch SGD and a step learning-rate schedule."""
    if train.label_kind != "action-id":
        raise ValueError(f"action probe needs action-id labels, got {train.label_kind}")
    if len(train) == 0:
        raise ValueError("empty training set")
    k = int(n_classes if n_classes is not None else train.labels.max() + 1)
    if train.labels.max() >= k:
        raise ValueError("label exceeds the class count")
    x64 = train.embeddings.astype(np.float64)
    # unit-norm rows keep the fixed SGD step size stable whatever the feature width
    scaler = _Scaler(x64, unit_rows=True)
    x = scaler(x64)
    y = train.labels
    n, d = x.shape
    params = ParameterSet()
    params.add("w", np.zeros((d, k)))
    params.add("b", np.zeros(k))
    rng = stream(seed, "action-probe")
    curve = []
    for epoch in range(epochs):
        hyper = {"lr": lr * step_gamma ** (epoch // step_size), "weight_decay": weight_decay}
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            with Tape() as tape:
                loss = focal_loss(Tensor(x[idx]) @ params["w"] + params["b"], y[idx], gamma)
            grads = tape.backward(loss)
            optimizer_step("sgd", params, params.grads_from(grads), hyper)
            total += float(loss.data) * len(idx)
        curve.append(total / n)
    w_raw, b = scaler.fold(params["w"].data, params["b"].data)
    return LinearProbe(w_raw.T, b, "action-id",
                       {"solver": "sgd", "epochs": epochs, "epoch_loss": curve, "gamma": gamma})


def fit_probe(train: FeatureSet, **kw) -> LinearProbe:
    """Dispatch on label kind."""
    if train.label_kind == "reward-binary":
        return fit_reward_probe(train, **kw)
    return fit_action_probe(train, **kw)


@dataclass
class ProbeReport:
    model_id: str
    task: str
    per_game_f1: dict
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for g, f in self.per_game_f1.items():
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"F1 for {g} outside [0, 1]: {f}")

    @property
    def mean_f1(self) -> float:
        return float(np.mean(list(self.per_game_f1.values()))) if self.per_game_f1 else 0.0

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "task": self.task, "per_game_f1": self.per_game_f1,
                "mean_f1": self.mean_f1, "diagnostics": self.diagnostics, **self.extra}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ProbeReport":
        known = {"model_id", "task", "per_game_f1", "mean_f1", "diagnostics"}
        return cls(doc["model_id"], doc["task"], dict(doc["per_game_f1"]),
                   dict(doc.get("diagnostics", {})), {k: v for k, v in doc.items() if k not in known})
