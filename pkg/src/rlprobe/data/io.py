"""Binary feature/corpus files and the JSON corpus manifest.

Feature file (little-endian)::

    "RLPF" | u16 version | u8 label kind | u16 len + UTF-8 game tag
    | u64 N | u64 D | N*D f32 embeddings | N i32 labels

Corpus file::

    "RLPC" | u16 version | u8 role | u16 len + UTF-8 game tag | u16 action count
    | u64 trajectory count | per trajectory: u64 T, then T step records of
      u16 H | u16 W | 4*H*W f32 observation | i32 action | f32 reward
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .containers import LABEL_KINDS, ROLES, STACK, Corpus, FeatureSet, Trajectory

FEATURE_MAGIC = b"RLPF"
CORPUS_MAGIC = b"RLPC"
FORMAT_VERSION = 1


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _tag(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _read_tag(raw: bytes, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<H", raw, off)
    return raw[off + 2:off + 2 + n].decode("utf-8"), off + 2 + n


def write_feature_file(fs: FeatureSet, path: str | Path) -> None:
    n, d = fs.embeddings.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<HB", FORMAT_VERSION, LABEL_KINDS.index(fs.label_kind)))
        fh.write(_tag(fs.game))
        fh.write(struct.pack("<QQ", n, d))
        fh.write(np.ascontiguousarray(fs.embeddings, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(fs.labels, dtype="<i4").tobytes())


def read_feature_file(path: str | Path) -> FeatureSet:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file")
    version, kind = struct.unpack_from("<HB", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported feature file version {version}")
    game, off = _read_tag(raw, 7)
    n, d = struct.unpack_from("<QQ", raw, off)
    off += 16
    emb = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d).astype(np.float32)
    off += 4 * n * d
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
    return FeatureSet(emb, labels, LABEL_KINDS[kind], game)


def write_corpus_file(corpus: Corpus, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<HB", FORMAT_VERSION, ROLES.index(corpus.role)))
        fh.write(_tag(corpus.game))
        fh.write(struct.pack("<HQ", corpus.n_actions, len(corpus)))
        for tr in corpus:
            t = len(tr)
            h, w = tr.frame_shape
            rec = np.dtype([("h", "<u2"), ("w", "<u2"), ("obs", "<f4", (STACK * h * w,)),
                            ("action", "<i4"), ("reward", "<f4")])
            arr = np.empty(t, dtype=rec)
            arr["h"], arr["w"] = h, w
            arr["obs"] = tr.observations.reshape(t, -1)
            arr["action"] = tr.actions
            arr["reward"] = tr.rewards
            fh.write(struct.pack("<Q", t))
            fh.write(arr.tobytes())


def read_corpus_file(path: str | Path) -> Corpus:
    raw = Path(path).read_bytes()
    if raw[:4] != CORPUS_MAGIC:
        raise ValueError(f"{path}: not a corpus file")
    version, role = struct.unpack_from("<HB", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported corpus file version {version}")
    game, off = _read_tag(raw, 7)
    n_actions, n_traj = struct.unpack_from("<HQ", raw, off)
    off += 10
    trajs = []
    for _ in range(n_traj):
        (t,) = struct.unpack_from("<Q", raw, off)
        off += 8
        h, w = struct.unpack_from("<HH", raw, off)
        rec = np.dtype([("h", "<u2"), ("w", "<u2"), ("obs", "<f4", (STACK * h * w,)),
                        ("action", "<i4"), ("reward", "<f4")])
        arr = np.frombuffer(raw, dtype=rec, count=t, offset=off)
        off += rec.itemsize * t
        if np.any(arr["h"] != h) or np.any(arr["w"] != w):
            raise ValueError(f"{path}: frame size changes within a trajectory")
        obs = arr["obs"].reshape(t, STACK, h, w)
        trajs.append(Trajectory.from_stacks(obs, arr["action"], arr["reward"]))
    return Corpus(trajs, ROLES[role], game, n_actions)


def write_manifest(entries: list[dict], path: str | Path, extra: dict | None = None) -> None:
    """``entries`` items carry ``path`` and ``role``; checksums are filled in here."""
    base = Path(path).parent
    files = []
    for e in entries:
        p = Path(e["path"])
        full = p if p.is_absolute() else base / p
        files.append({**e, "path": str(p), "sha256": sha256_file(full)})
    doc = {"files": files, **(extra or {})}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path: str | Path, verify: bool = True) -> dict:
    doc = json.loads(Path(path).read_text())
    if verify:
        base = Path(path).parent
        for e in doc["files"]:
            p = Path(e["path"])
            full = p if p.is_absolute() else base / p
            if sha256_file(full) != e["sha256"]:
                raise ValueError(f"checksum mismatch for {e['path']}")
    return doc
