"""Run manifest: per-stage input/output checksums under one output directory."""

from __future__ import annotations

import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__
from ..data import sha256_file

MANIFEST = "manifest.json"


class StaleInputError(RuntimeError):
    """An input no longer matches the checksum its producing stage recorded (exit code 3)."""

    def __init__(self, stage: str, path: str, reason: str):
        super().__init__(f"stale stage '{stage}': {path} {reason}; re-run '{stage.split(':')[0]}'")
        self.stage = stage
        self.path = path


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Single-writer record of what each stage read and wrote, relative to ``root``.

    ``stage_digest(stage)`` hashes the part of the config a stage depends on, so
    editing one model variant leaves the other variants' artifacts valid.
    """

    def __init__(self, root: str | Path, config_sha256: str, stage_digest):
        self.root = Path(root)
        self.path = self.root / MANIFEST
        self.stage_digest = stage_digest
        self.doc = {"tool": "rlprobe", "version": __version__, "stages": {}}
        if self.path.exists():
            self.doc = json.loads(self.path.read_text())
        self.doc["config_sha256"] = config_sha256

    @property
    def stages(self) -> dict:
        return self.doc["stages"]

    def producer(self, rel: str) -> tuple[str, dict] | None:
        for name, st in self.stages.items():
            if rel in st["outputs"]:
                return name, st
        return None

    def verify_inputs(self, rels) -> dict[str, str]:
        """Checksums of ``rels``; raises StaleInputError unless each matches its producer."""
        out = {}
        for rel in rels:
            found = self.producer(rel)
            if found is None or not (self.root / rel).exists():
                raise FileNotFoundError(f"missing upstream artifact {rel}; run the stage that writes it first")
            stage, st = found
            if st["config_sha256"] != self.stage_digest(stage):
                raise StaleInputError(stage, rel, "was produced under a different config")
            digest = sha256_file(self.root / rel)
            if digest != st["outputs"][rel]:
                raise StaleInputError(stage, rel, "changed since it was written")
            out[rel] = digest
        return out

    def record(self, stage: str, inputs: dict[str, str], outputs, started: str) -> None:
        for rel, digest in inputs.items():
            if sha256_file(self.root / rel) != digest:
                raise RuntimeError(f"stage '{stage}' modified its input {rel}")
        self.stages[stage] = {
            "config_sha256": self.stage_digest(stage),
            "inputs": dict(sorted(inputs.items())),
            "outputs": {rel: sha256_file(self.root / rel) for rel in sorted(outputs)},
            "started": started,
            "finished": now(),
        }
        self.save()

    def save(self) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest-")
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(self.doc, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.path)

