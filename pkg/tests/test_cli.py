import json
import shutil

import numpy as np
import pytest
import yaml

from rlprobe.cli import ConfigError, load_config, main, parse_config
from rlprobe.cli.config import default_config_text
from rlprobe.data import read_corpus_file, read_feature_file, sha256_file

from reference_data import REWARD_F1, RL_IQM

TRAIN = {"epochs": 1, "batch_size": 8, "max_batches_per_epoch": 2}
TINY = {
    "seed": 3,
    "env": {"max_episode_len": 50},
    "data": {
        "pretrain": {"policy": "weak", "steps": 400},
        "reward-probe": {"policy": "random", "steps": 1500},
        "action-probe": {"policy": "expert", "steps": 300},
    },
    "models": {
        "a": {"train": TRAIN},
        "b": {"loss": {"objective": "byol", "target_mode": "ema", "inverse": False}, "train": TRAIN},
        "c": {"train": {"epochs": 0}},
    },
    "probing": {"pred_k": [1, 2], "action_epochs": 2},
    "stats": {"bootstrap_replicates": 200, "n_perm": 500},
}
SCORES = "model,game,seed,score\na,gridfruit,0,5\na,gridfruit,1,6\nb,gridfruit,0,3\nb,gridfruit,1,4\n" \
         "c,gridfruit,0,1\nc,gridfruit,1,1.5\n"


def write_config(path, doc=TINY, **over):
    path.write_text(yaml.safe_dump({**doc, **over}))
    return path


def rlprobe(cfg, out, *args):
    return main(["--config", str(cfg), "--out", str(out), *args])


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """One tiny pipeline run up to the probe reports."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "tiny.yaml")
    (root / "scores.csv").write_text(SCORES)
    (root / "base.csv").write_text("game,random,human\ngridfruit,0,10\n")
    out = root / "run"
    for stage in ("gen-data", "pretrain", "extract", "probe", "probe-pred"):
        assert rlprobe(cfg, out, stage) == 0, stage
    return root, cfg, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestConfig:
    def test_default_has_three_roles(self):
        cfg = load_config(None)
        assert set(cfg.data) == {"pretrain", "reward-probe", "action-probe"}
        assert len(cfg.variants) >= 3

    def test_missing_field_is_named(self):
        doc = yaml.safe_load(default_config_text())
        del doc["data"]["pretrain"]["steps"]
        with pytest.raises(ConfigError, match="data.pretrain: missing required field 'steps'"):
            parse_config(doc)

    def test_unknown_field(self):
        doc = yaml.safe_load(default_config_text())
        doc["probing"]["bogus"] = 1
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(doc)

    def test_missing_scores_file(self, tmp_path):
        doc = yaml.safe_load(default_config_text())
        doc["stats"]["scores"] = "nope.csv"
        with pytest.raises(ConfigError, match="nope.csv"):
            parse_config(doc, tmp_path)

    def test_checksum_ignores_threads(self):
        a, b = load_config(None), load_config(None)
        b.raw["threads"] = 4
        assert a.checksum() == b.checksum()
        b.raw["seed"] = 9
        b.seed = 9
        assert a.checksum() != b.checksum()

    def test_missing_field_exit_code(self, tmp_path, capsys):
        doc = dict(TINY)
        doc.pop("probing")
        assert rlprobe(write_config(tmp_path / "c.yaml", doc), tmp_path / "o", "gen-data") == 2
        assert "missing required field 'probing'" in capsys.readouterr().err


class TestGenData:
    def test_roles_and_determinism(self, run, tmp_path):
        _, cfg, out = run
        for role in ("pretrain", "reward-probe", "action-probe"):
            assert read_corpus_file(out / f"data/{role}.rlc").role == role
        assert rlprobe(cfg, tmp_path / "again", "gen-data") == 0
        first, second = manifest(out)["stages"]["gen-data"], manifest(tmp_path / "again")["stages"]["gen-data"]
        assert first["outputs"] == second["outputs"]

    def test_unwritable_out(self, run, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert rlprobe(run[1], blocker / "sub", "gen-data") != 0
        assert "cannot write output directory" in capsys.readouterr().err


class TestStages:
    def test_extract_rows_match_steps(self, run):
        _, _, out = run
        for task, role in (("reward", "reward-probe"), ("action", "action-probe")):
            fs = read_feature_file(out / f"features/a.{task}.rlf")
            assert len(fs) == read_corpus_file(out / f"data/{role}.rlc").n_steps

    def test_probe_dispatches_on_label_kind(self, run):
        _, _, out = run
        for task, kind in (("reward", "reward-binary"), ("action", "action-id")):
            assert read_feature_file(out / f"features/b.{task}.rlf").label_kind == kind
            rep = json.loads((out / f"reports/b.{task}.json").read_text())
            assert rep["task"] == task
        assert "iterations" in json.loads((out / "reports/b.reward.json").read_text())["diagnostics"]
        assert "epoch_loss" in json.loads((out / "reports/b.action.json").read_text())["diagnostics"]

    def test_probe_pred_records_k(self, run):
        _, _, out = run
        rep = json.loads((out / "reports/a.reward-pred-2.json").read_text())
        assert rep["k"] == 2 and rep["task"] == "reward-pred-2"

    def test_inputs_unchanged(self, run):
        _, _, out = run
        for name, st in manifest(out)["stages"].items():
            for rel, digest in st["inputs"].items():
                assert sha256_file(out / rel) == digest, (name, rel)

    def test_extract_keeps_weights(self, run):
        _, _, out = run
        st = manifest(out)["stages"]
        assert st["extract:a"]["inputs"]["models/a.rlpw"] == st["pretrain:a"]["outputs"]["models/a.rlpw"]

    def test_unknown_variant(self, run, capsys):
        assert rlprobe(run[1], run[2], "probe", "--variant", "zzz") == 2
        assert "zzz" in capsys.readouterr().err

    def test_stale_input_exit_3(self, run, tmp_path, capsys):
        _, cfg, out = run
        copy = tmp_path / "run"
        shutil.copytree(out, copy)
        corpus = copy / "data/pretrain.rlc"
        raw = bytearray(corpus.read_bytes())
        raw[-1] ^= 0xFF
        corpus.write_bytes(bytes(raw))
        assert rlprobe(cfg, copy, "pretrain", "--variant", "c") == 3
        assert "stale stage 'gen-data'" in capsys.readouterr().err

    def test_config_change_is_stale(self, run, tmp_path, capsys):
        root, _, out = run
        copy = tmp_path / "run"
        shutil.copytree(out, copy)
        cfg = write_config(tmp_path / "seed.yaml", seed=4)
        assert rlprobe(cfg, copy, "extract", "--variant", "c") == 3
        assert "different config" in capsys.readouterr().err

    def test_missing_upstream(self, run, tmp_path, capsys):
        assert rlprobe(run[1], tmp_path / "empty", "pretrain") == 2
        assert "missing upstream artifact data/pretrain.rlc" in capsys.readouterr().err


class TestReport:
    def report(self, run, tmp_path, *extra):
        root, cfg, out = run
        copy = tmp_path / "run"
        shutil.copytree(out, copy)
        code = rlprobe(cfg, copy, "report", "--scores", str(root / "scores.csv"),
                       "--baselines", str(root / "base.csv"), *extra)
        return code, copy

    def test_outputs(self, run, tmp_path):
        code, copy = self.report(run, tmp_path)
        assert code == 0
        agg = json.loads((copy / "report/aggregates.json").read_text())
        assert agg["a"]["point"] == pytest.approx(0.55)
        corr = json.loads((copy / "report/correlation.json").read_text())
        tasks = set(corr["tasks"]) | set(corr["skipped"])
        assert {"reward", "action", "reward-pred-1", "reward-pred-2"} == tasks
        for task in corr["tasks"]:
            assert (copy / f"report/scatter_{task}.csv").exists()

    def test_threads_invariant(self, run, tmp_path):
        _, one = self.report(run, tmp_path / "1")
        _, four = self.report(run, tmp_path / "4", "--threads", "4")
        for name in ("aggregates.json", "correlation.json"):
            assert (one / "report" / name).read_bytes() == (four / "report" / name).read_bytes()

    def test_unmatched_ids_listed(self, run, tmp_path, capsys):
        root = run[0]
        scores = tmp_path / "scores.csv"
        scores.write_text(SCORES.replace("c,", "d,"))
        _, cfg, out = run
        assert rlprobe(cfg, out, "report", "--scores", str(scores), "--baselines", str(root / "base.csv")) == 2
        assert "c, d" in capsys.readouterr().err


class TestPairsReport:
    def pairs(self, path, rows):
        path.write_text("model,probe_f1,rl_iqm\n" + "".join(f"{m},{f},{r}\n" for m, f, r in rows))
        return path

    def test_reference_pairs(self, tmp_path):
        rows = [(f"m{i}", f, r) for i, (f, r) in enumerate(zip(REWARD_F1, RL_IQM))]
        src = self.pairs(tmp_path / "p.csv", rows)
        assert main(["--out", str(tmp_path / "o"), "report", "--pairs", str(src)]) == 0
        rep = json.loads((tmp_path / "o/report/correlation.json").read_text())["tasks"]["reward"]
        assert rep["rho"] == pytest.approx(0.9333, abs=5e-4)

    def test_row_order_invariant(self, tmp_path):
        rows = [(f"m{i}", f, r) for i, (f, r) in enumerate(zip(REWARD_F1, RL_IQM))]
        perm = np.random.default_rng(0).permutation(len(rows))
        outs = []
        for tag, rs in (("a", rows), ("b", [rows[i] for i in perm])):
            src = self.pairs(tmp_path / f"{tag}.csv", rs)
            assert main(["--out", str(tmp_path / tag), "report", "--pairs", str(src)]) == 0
            outs.append((tmp_path / tag / "report/correlation.json").read_bytes())
        assert outs[0] == outs[1]

    def test_two_models_rejected(self, tmp_path, capsys):
        src = self.pairs(tmp_path / "p.csv", [("a", 1, 2), ("b", 2, 3)])
        assert main(["--out", str(tmp_path / "o"), "report", "--pairs", str(src)]) == 2
        assert "n >= 3" in capsys.readouterr().err


class TestChecks:
    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--coords", "30"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 8 and all(line.startswith("PASS") for line in lines)

    def test_selftest(self, capsys):
        assert main(["selftest"]) == 0
        assert "FAIL" not in capsys.readouterr().out
