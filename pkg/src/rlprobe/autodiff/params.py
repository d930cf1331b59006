"""Named parameter collections, optimizers and the RLPW checkpoint format."""

from __future__ import annotations

import hashlib
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"RLPW"
CHECKPOINT_VERSION = 1


class ParameterSet:
    """Ordered mapping ``path -> Tensor`` plus optimizer state keyed by path."""

    def __init__(self, tensors: Mapping[str, Tensor | np.ndarray] | None = None,
                 requires_grad: bool = True):
        self.tensors: OrderedDict[str, Tensor] = OrderedDict()
        self.slots: dict[str, dict[str, np.ndarray]] = {}
        self.step = 0
        for k, v in (tensors or {}).items():
            self.add(k, v, requires_grad=requires_grad)

    def add(self, path: str, value, requires_grad: bool = True) -> Tensor:
        if path in self.tensors:
            raise KeyError(f"duplicate parameter {path!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = requires_grad
        t.name = path
        self.tensors[path] = t
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self.tensors[path]

    def __contains__(self, path: str) -> bool:
        return path in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def keys(self):
        return self.tensors.keys()

    def subset(self, prefix: str) -> "ParameterSet":
        """View of the entries under ``prefix`` (tensors are shared, not copied)."""
        out = ParameterSet()
        for k, t in self.tensors.items():
            if k.startswith(prefix):
                out.tensors[k] = t
        return out

    def copy(self, requires_grad: bool | None = None) -> "ParameterSet":
        out = ParameterSet()
        for k, t in self.tensors.items():
            rg = t.requires_grad if requires_grad is None else requires_grad
            out.add(k, t.data.copy(), requires_grad=rg)
        return out

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, t in self.tensors.items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def grads_from(self, grads) -> dict[str, np.ndarray]:
        return {k: grads.of(t) for k, t in self.tensors.items()}


def optimizer_step(kind: str, params: ParameterSet, grads: Mapping[str, np.ndarray],
                   hyper: Mapping[str, float]) -> bool:
    """Update ``params`` in place. Returns False (and leaves params untouched) on NaN grads."""
    lr = float(hyper.get("lr", 1e-4))
    wd = float(hyper.get("weight_decay", 0.0))
    if lr < 0 or wd < 0:
        raise ValueError("lr and weight_decay must be non-negative")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            log.warning("optimizer step refused: non-finite gradient for %s", k)
            return False
    grads = dict(grads)
    max_norm = hyper.get("max_grad_norm")
    if max_norm:
        total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if total > max_norm:
            grads = {k: g * (max_norm / total) for k, g in grads.items()}

    params.step += 1
    if kind == "sgd":
        for k, g in grads.items():
            p = params[k].data
            p -= lr * (g + wd * p)
    elif kind == "adam":
        b1 = float(hyper.get("beta1", 0.9))
        b2 = float(hyper.get("beta2", 0.999))
        eps = float(hyper.get("eps", 1.5e-4))
        t = params.step
        for k, g in grads.items():
            p = params[k].data
            if wd:
                g = g + wd * p
            slot = params.slots.get(k)
            if slot is None:
                slot = params.slots[k] = {"m": np.zeros_like(p), "v": np.zeros_like(p)}
            slot["m"] = b1 * slot["m"] + (1 - b1) * g
            slot["v"] = b2 * slot["v"] + (1 - b2) * g * g
            mhat = slot["m"] / (1 - b1 ** t)
            vhat = slot["v"] / (1 - b2 ** t)
            p -= lr * mhat / (np.sqrt(vhat) + eps)
    else:
        raise ValueError(f"unknown optimizer {kind!r}")
    return True


def ema_update(target: ParameterSet, online: ParameterSet, tau: float) -> ParameterSet:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if list(target.keys()) != list(online.keys()):
        missing = set(target.keys()) ^ set(online.keys())
        raise KeyError(f"parameter sets differ: {sorted(missing)}")
    for k, t in target.items():
        o = online[k].data
        if o.shape != t.shape:
            raise ValueError(f"{k}: shape {t.shape} vs {o.shape}")
        t.data[...] = tau * t.data + (1.0 - tau) * o
    return target


def save_checkpoint(params: ParameterSet, path: str | Path) -> None:
    """Write ``RLPW`` | u16 version | u32 count | entries.

    Each entry: u16 path length, UTF-8 path, u8 rank, u64 extents, little-endian f64 data.
    """
    buf = bytearray(CHECKPOINT_MAGIC)
    buf += struct.pack("<HI", CHECKPOINT_VERSION, len(params))
    for k, t in params.items():
        name = k.encode("utf-8")
        buf += struct.pack("<H", len(name)) + name
        buf += struct.pack("<B", t.ndim)
        buf += struct.pack(f"<{t.ndim}Q", *t.shape)
        buf += np.ascontiguousarray(t.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path, requires_grad: bool = True) -> ParameterSet:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 10
    out = ParameterSet()
    for _ in range(count):
        (n,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + n].decode("utf-8")
        off += n
        (rank,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        size = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
        out.add(name, data, requires_grad=requires_grad)
    return out
