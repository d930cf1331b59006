"""``rlprobe`` command line: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..autodiff import load_checkpoint, save_checkpoint, stream
from ..data import (
    FeatureSet,
    SplitSpec,
    binarize_reward,
    read_corpus_file,
    read_feature_file,
    sha256_file,
    split,
    write_corpus_file,
    write_feature_file,
)
from ..env import generate_corpus
from ..probing import ProbeReport, fit_action_probe, fit_reward_probe, probe_predictions
from ..ssl import DivergenceError, embed_corpus, pretrain
from ..ssl.checks import loss_gradient_suite
from ..stats import (
    correlate,
    read_baselines_csv,
    read_pairs_csv,
    read_scores_csv,
    stratified_bootstrap_ci,
    write_scatter_csv,
)
from .config import DATA_ROLES, ConfigError, RunConfig, load_config
from .manifest import RunManifest, StaleInputError, now

log = logging.getLogger("rlprobe")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_STALE = 0, 1, 2, 3
PROBE_ROLES = {"reward": "reward-probe", "action": "action-probe"}
GRAD_TOL = 1e-4


def _digest(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


def stage_digest(cfg: RunConfig, stage: str) -> str:
    """Hash of the config sections ``stage`` (and everything upstream of it) reads."""
    kind, _, rest = stage.partition(":")
    doc = {"seed": cfg.seed, "env": cfg.raw["env"], "data": cfg.raw["data"]}
    if kind in ("pretrain", "extract", "probe", "probe-pred"):
        name = rest.split(":")[0]
        doc["model"] = cfg.raw["models"].get(name)
    if kind in ("probe", "probe-pred"):
        doc["probing"] = cfg.raw["probing"]
    if kind == "report":
        doc = {k: v for k, v in cfg.raw.items() if k not in ("threads", "out")}
        doc["seed"] = cfg.seed
    return _digest(doc)


class Run:
    """Resolved config plus the output directory and its manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.out)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            for sub in ("data", "models", "features", "reports", "report"):
                (self.root / sub).mkdir(exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot write output directory {self.root}: {e.strerror or e}") from None
        self.manifest = RunManifest(self.root, cfg.checksum(), lambda s: stage_digest(cfg, s))

    def path(self, rel: str) -> Path:
        return self.root / rel

    def variants(self, names) -> list[str]:
        names = names or list(self.cfg.variants)
        unknown = [n for n in names if n not in self.cfg.variants]
        if unknown:
            raise ConfigError(f"unknown model variant(s): {', '.join(unknown)}")
        return names


def data_rel(role: str) -> str:
    return f"data/{role}.rlc"


def model_rel(name: str) -> str:
    return f"models/{name}.rlpw"


def feature_rel(name: str, task: str) -> str:
    return f"features/{name}.{task}.rlf"


def report_rel(name: str, task: str) -> str:
    return f"reports/{name}.{task}.json"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(run: Run, args) -> int:
    started, outs = now(), []
    for role in DATA_ROLES:
        plan = run.cfg.data[role]
        corpus = generate_corpus(run.cfg.env, plan.policy, plan.steps, role, stream(run.cfg.seed, "data", role))
        write_corpus_file(corpus, run.path(data_rel(role)))
        outs.append(data_rel(role))
        print(f"gen-data: {role} {corpus.n_steps} steps in {len(corpus)} trajectories")
    run.manifest.record("gen-data", {}, outs, started)
    return EXIT_OK


def cmd_pretrain(run: Run, args) -> int:
    for name in run.variants(args.variant):
        started = now()
        inputs = run.manifest.verify_inputs([data_rel("pretrain")])
        v = run.cfg.variants[name]
        corpus = read_corpus_file(run.path(data_rel("pretrain")))
        result = pretrain(corpus, v.model, v.train, stream(run.cfg.seed, "pretrain", name))
        save_checkpoint(result.params, run.path(model_rel(name)))
        _write_json(run.path(f"models/{name}.json"), {"model": v.model.to_dict(), "train": v.train.to_dict(),
                                                      "curves": result.curves})
        run.manifest.record(f"pretrain:{name}", inputs, [model_rel(name), f"models/{name}.json"], started)
        final = {k: round(c[-1], 6) for k, c in result.curves.items() if c}
        print(f"pretrain: {name} epochs={v.train.epochs} final={final}")
    return EXIT_OK


def cmd_extract(run: Run, args) -> int:
    for name in run.variants(args.variant):
        started = now()
        rels = [model_rel(name)] + [data_rel(r) for r in PROBE_ROLES.values()]
        inputs = run.manifest.verify_inputs(rels)
        params = load_checkpoint(run.path(model_rel(name)), requires_grad=False)
        cfg = run.cfg.variants[name].model
        outs = []
        for task, role in PROBE_ROLES.items():
            corpus = read_corpus_file(run.path(data_rel(role)))
            if task == "reward":
                labels, kind = binarize_reward(corpus.all_rewards()), "reward-binary"
            else:
                labels, kind = corpus.all_actions(), "action-id"
            fs = FeatureSet(embed_corpus(params, cfg, corpus), labels, kind, corpus.game)
            write_feature_file(fs, run.path(feature_rel(name, task)))
            outs.append(feature_rel(name, task))
            print(f"extract: {name} {task} {fs.embeddings.shape[0]}x{fs.embeddings.shape[1]}")
        run.manifest.record(f"extract:{name}", inputs, outs, started)
    return EXIT_OK


def probe_features(fs: FeatureSet, run: Run, model_id: str) -> ProbeReport:
    """Fit the probe matching the file's label kind and score it on the held-out split."""
    s = run.cfg.probing
    train, ev = split(fs, SplitSpec(s.train_fraction, s.split_seed))
    if fs.label_kind == "reward-binary":
        probe, task = fit_reward_probe(train, l2=s.l2, max_iter=s.max_iter, tol=s.tol), "reward"
    else:
        probe = fit_action_probe(train, n_classes=run.cfg.env.n_actions, gamma=s.focal_gamma, lr=s.action_lr,
                                 batch_size=s.action_batch_size, weight_decay=s.action_weight_decay,
                                 epochs=s.action_epochs, step_size=s.action_step_size,
                                 step_gamma=s.action_step_gamma, seed=run.cfg.seed)
        task = "action"
    return ProbeReport(model_id, task, {fs.game: probe.score(ev)}, dict(probe.diagnostics))


def cmd_probe(run: Run, args) -> int:
    for name in run.variants(args.variant):
        for task in PROBE_ROLES:
            started = now()
            inputs = run.manifest.verify_inputs([feature_rel(name, task)])
            report = probe_features(read_feature_file(run.path(feature_rel(name, task))), run, name)
            run.path(report_rel(name, report.task)).write_text(report.to_json())
            run.manifest.record(f"probe:{name}:{task}", inputs, [report_rel(name, report.task)], started)
            print(f"probe: {name} {report.task} F1={report.mean_f1:.4f}")
    return EXIT_OK


def cmd_probe_pred(run: Run, args) -> int:
    ks = args.k or list(run.cfg.probing.pred_k)
    s = run.cfg.probing
    for name in run.variants(args.variant):
        cfg = run.cfg.variants[name].model
        for k in ks:
            started = now()
            inputs = run.manifest.verify_inputs([model_rel(name), data_rel("reward-probe")])
            params = load_checkpoint(run.path(model_rel(name)), requires_grad=False)
            corpus = read_corpus_file(run.path(data_rel("reward-probe")))
            report = probe_predictions(params, cfg, corpus, k, stream(run.cfg.seed, "probe-pred", name, k),
                                       SplitSpec(s.train_fraction, s.split_seed), model_id=name)
            rel = report_rel(name, report.task)
            run.path(rel).write_text(report.to_json())
            run.manifest.record(f"probe-pred:{name}:{k}", inputs, [rel], started)
            print(f"probe-pred: {name} k={k} F1={report.mean_f1:.4f}")
    return EXIT_OK


def _require_three(models) -> None:
    if len(models) < 3:
        raise ConfigError(f"correlation needs n >= 3 models, got {len(models)}")


def _write_correlation(run: Run, reports: dict, skipped: dict | None = None) -> list[str]:
    outs = []
    doc = {"tasks": {t: r.to_dict() for t, r in reports.items()}, "skipped": skipped or {}}
    _write_json(run.path("report/correlation.json"), doc)
    outs.append("report/correlation.json")
    for task, r in reports.items():
        rel = f"report/scatter_{task}.csv"
        write_scatter_csv(run.path(rel), zip(r.models, r.probe_f1, r.rl))
        outs.append(rel)
    return outs


def cmd_report(run: Run, args) -> int:
    cfg, started = run.cfg, now()
    st = cfg.stats
    if args.pairs:
        rows = read_pairs_csv(args.pairs)
        _require_three(rows)
        models, f1, rl = zip(*rows)
        rep = correlate(args.task, list(models), f1, rl, st.n_perm, stream(cfg.seed, "perm", args.task),
                        cfg.threads)
        outs = _write_correlation(run, {args.task: rep})
        run.manifest.record("report", {str(Path(args.pairs).resolve()): sha256_file(args.pairs)}, outs, started)
        print(f"report: {args.task} rho={rep.rho:.4f} p={rep.p:.6f} n={len(models)}")
        return EXIT_OK

    scores, baselines = args.scores or st.scores, args.baselines or st.baselines
    if not scores or not baselines:
        raise ConfigError("report needs a scores CSV and a baselines CSV (flags or stats.scores/stats.baselines)")
    tables = read_scores_csv(scores, read_baselines_csv(baselines))
    rels = sorted(rel for stage, s in run.manifest.stages.items() if stage.startswith(("probe:", "probe-pred:"))
                  and stage.split(":")[1] in cfg.variants for rel in s["outputs"])
    if not rels:
        raise ConfigError("no probe reports found; run probe first")
    inputs = run.manifest.verify_inputs(rels)
    by_task: dict[str, dict[str, float]] = {}
    for rel in rels:
        rep = ProbeReport.from_dict(json.loads(run.path(rel).read_text()))
        by_task.setdefault(rep.task, {})[rep.model_id] = rep.mean_f1

    aggregates = {m: stratified_bootstrap_ci(t, st.kind, st.bootstrap_replicates, st.level,
                                             stream(cfg.seed, "bootstrap", m), cfg.threads)
                  for m, t in sorted(tables.items())}
    correlations, skipped = {}, {}
    for task, f1 in sorted(by_task.items()):
        unmatched = sorted(set(f1) ^ set(tables))
        if unmatched:
            raise ConfigError(f"task {task}: model ids not present in both probe reports and scores: "
                              f"{', '.join(unmatched)}")
        models = sorted(f1)
        _require_three(models)
        x, y = [f1[m] for m in models], [aggregates[m].point for m in models]
        if len(set(x)) == 1 or len(set(y)) == 1:
            # a rank correlation with a constant side is undefined; keep the other tasks
            skipped[task] = "constant probe F1" if len(set(x)) == 1 else "constant RL aggregate"
            log.warning("report: skipping %s (%s)", task, skipped[task])
            continue
        correlations[task] = correlate(task, models, x, y, st.n_perm, stream(cfg.seed, "perm", task), cfg.threads)
    _write_json(run.path("report/aggregates.json"), {m: a.to_dict() for m, a in aggregates.items()})
    outs = ["report/aggregates.json"] + _write_correlation(run, correlations, skipped)
    for path in (scores, baselines):
        inputs[str(Path(path).resolve())] = sha256_file(path)
    run.manifest.record("report", inputs, outs, started)
    for task, r in correlations.items():
        print(f"report: {task} rho={r.rho:.4f} p={r.p:.6f} n={len(r.models)}")
    for task, why in skipped.items():
        print(f"report: {task} skipped ({why})")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    errors = loss_gradient_suite(stream(getattr(args, "seed", 0), "gradcheck"), n_coords=args.coords)
    bad = 0
    for name, err in errors.items():
        ok = err <= GRAD_TOL
        bad += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name} max_rel_err={err:.3e}")
    return EXIT_OK if bad == 0 else EXIT_FAIL


def selftest_checks() -> dict[str, bool]:
    """Fast known-answer checks of the statistics and the gradient engine."""
    from ..stats import iqm, perm_test, spearman

    out = {
        "iqm": iqm([1.0, 2.0, 3.0, 4.0]) == 2.5,
        "spearman": abs(spearman([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) - 0.8) < 1e-12,
        "perm_test_threads": perm_test(np.arange(9.0), np.arange(9.0)[::-1] ** 3, 4000, stream(0, "self"), 1)
        == perm_test(np.arange(9.0), np.arange(9.0)[::-1] ** 3, 4000, stream(0, "self"), 3),
    }
    errors = loss_gradient_suite(stream(0, "selftest"), n_coords=20)
    out["gradients"] = max(errors.values()) <= GRAD_TOL
    return out


def cmd_selftest(args) -> int:
    checks = selftest_checks()
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="YAML run config (default: the packaged desk-scale config)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--threads", type=int, help="worker threads for resampling statistics")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rlprobe", parents=[common],
                                     description="Probe self-supervised RL representations.")
    parser.add_argument("--version", action="version", version=f"rlprobe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="generate the three corpora")
    for name, helptext in (("pretrain", "train model variants"), ("extract", "write frozen features"),
                           ("probe", "fit reward and action probes")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--variant", action="append", help="model variant (repeatable; default all)")
    p = sub.add_parser("probe-pred", parents=[common], help="probe k-step open-loop predictions")
    p.add_argument("--variant", action="append")
    p.add_argument("--k", type=int, action="append", help="prediction depth (repeatable; default config)")
    p = sub.add_parser("report", parents=[common], help="aggregate scores and correlate with probes")
    p.add_argument("--scores", help="game,seed,score[,model] CSV")
    p.add_argument("--baselines", help="game,random,human CSV")
    p.add_argument("--pairs", help="model,probe_f1,rl_iqm CSV; bypasses probe reports")
    p.add_argument("--task", default="reward", help="task name for --pairs (default reward)")
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every loss")
    p.add_argument("--coords", type=int, default=100)
    sub.add_parser("selftest", parents=[common], help="fast known-answer checks")
    return parser


STAGES = {"gen-data": cmd_gen_data, "pretrain": cmd_pretrain, "extract": cmd_extract, "probe": cmd_probe,
          "probe-pred": cmd_probe_pred, "report": cmd_report}


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    for key in ("seed", "out", "threads"):
        if hasattr(args, key):
            setattr(cfg, key, getattr(args, key))
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        if args.command == "selftest":
            return cmd_selftest(args)
        run = Run(_resolve(args))
        return STAGES[args.command](run, args)
    except StaleInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STALE
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, DivergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
