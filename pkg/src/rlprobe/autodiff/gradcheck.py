from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParameterSet
from .tensor import Tape, Tensor


def grad_check(fn: Callable[[ParameterSet], Tensor], params: ParameterSet, eps: float = 1e-5,
               n_coords: int = 100, rng: np.random.Generator | None = None) -> float:
    """Max over sampled coordinates of |analytic - numeric| / max(1, |numeric|).

    ``fn`` must be deterministic; any stochastic op inside it has to be driven by
    a stream re-created on every call.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    with Tape() as tape:
        loss = fn(params)
    base = float(loss.data)
    if float(fn(params).data) != base:
        raise RuntimeError("grad_check: fn is not deterministic (two evaluations differ)")
    grads = tape.backward(loss)

    coords = [(k, i) for k, t in params.items() for i in range(t.size)]
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[j] for j in sorted(pick)]

    worst = 0.0
    for k, i in coords:
        flat = params[k].data.reshape(-1)
        old = flat[i]
        flat[i] = old + eps
        up = float(fn(params).data)
        flat[i] = old - eps
        down = float(fn(params).data)
        flat[i] = old
        numeric = (up - down) / (2 * eps)
        analytic = float(grads.of(params[k]).reshape(-1)[i])
        worst = max(worst, abs(analytic - numeric) / max(1.0, abs(numeric)))
    return worst
