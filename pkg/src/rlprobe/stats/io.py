"""CSV ingestion of RL scores and the plot-ready scatter output."""

from __future__ import annotations

import csv
from pathlib import Path

from .scores import ScoreTable


def _rows(path: str | Path, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        return [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]


def read_baselines_csv(path: str | Path) -> dict[str, tuple[float, float]]:
    """``game,random,human`` -> ``{game: (random, human)}``."""
    out = {}
    for row in _rows(path, ("game", "random", "human")):
        if row["game"] in out:
            raise ValueError(f"{path}: duplicate game {row['game']!r}")
        out[row["game"]] = (float(row["random"]), float(row["human"]))
    return out


def read_scores_csv(path: str | Path, baselines: dict[str, tuple[float, float]],
                    model: str | None = None) -> dict[str, ScoreTable]:
    """``game,seed,score`` (optionally with a ``model`` column) -> ``{model: ScoreTable}``.

    Without a ``model`` column every row belongs to ``model`` (default: the file stem).
    Seeds are sorted so that row order never matters.
    """
    rows = _rows(path, ("game", "seed", "score"))
    default = model if model is not None else Path(path).stem
    grouped: dict[str, dict[str, list[tuple[str, float]]]] = {}
    for row in rows:
        m = row.get("model") or default
        grouped.setdefault(m, {}).setdefault(row["game"], []).append((row["seed"], float(row["score"])))
    out = {}
    for m, games in grouped.items():
        unknown = sorted(set(games) - set(baselines))
        if unknown:
            raise ValueError(f"{path}: no baselines for game(s) {', '.join(unknown)}")
        scores = {g: [s for _, s in sorted(v, key=lambda t: (_seed_key(t[0]), t[1]))] for g, v in games.items()}
        out[m] = ScoreTable(scores, {g: baselines[g][0] for g in games}, {g: baselines[g][1] for g in games})
    return out


def _seed_key(seed: str):
    try:
        return (0, float(seed), seed)
    except ValueError:
        return (1, 0.0, seed)


def read_pairs_csv(path: str | Path) -> list[tuple[str, float, float]]:
    """``model,probe_f1,rl_iqm`` rows."""
    return [(r["model"], float(r["probe_f1"]), float(r["rl_iqm"]))
            for r in _rows(path, ("model", "probe_f1", "rl_iqm"))]


def write_scatter_csv(path: str | Path, pairs) -> None:
    """Rows sorted by model id; floats written with ``repr`` so they round-trip."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "probe_f1", "rl_iqm"])
        for m, f, r in sorted(pairs, key=lambda t: str(t[0])):
            w.writerow([m, repr(float(f)), repr(float(r))])
