import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlprobe.autodiff import Tensor, ops, stream
from rlprobe.data import FeatureSet, split
from rlprobe.env import EnvSpec, PolicySpec, generate_corpus
from rlprobe.probing import (
    LinearProbe,
    ProbeReport,
    binary_f1,
    fit_action_probe,
    fit_reward_probe,
    fit_reward_regression,
    focal_loss,
    multiclass_weighted_f1,
    prediction_features,
    probe_predictions,
    reward_probe_loss,
)
from rlprobe.ssl import ModelConfig, init_model
from rlprobe.ssl.pretrain import embed_corpus


def _blobs(seed, n=600, d=20, rate=0.1, shift=1.0):
    r = stream(seed)
    y = (r.random(n) < rate).astype(np.int64)
    x = r.normal(size=(n, d)) + shift * y[:, None] * r.normal(size=d)
    return FeatureSet(x.astype(np.float32), y, "reward-binary")


class TestMetrics:
    def test_binary_examples(self):
        assert binary_f1([1, 1, 1, 0, 0], [1, 1, 0, 1, 0]) == pytest.approx(2 / 3)
        assert binary_f1([1, 0, 1], [1, 0, 1]) == 1.0
        assert binary_f1([0, 0, 0], [1, 0, 1]) == 0.0

    def test_multiclass_example(self):
        # one-vs-rest: F1_0 = 2/3 (support 2), F1_1 = 2/3, F1_2 = 1 -> (4/3 + 2/3 + 1) / 4
        assert multiclass_weighted_f1([0, 1, 1, 2], [0, 0, 1, 2]) == pytest.approx(0.75, abs=1e-12)
        assert multiclass_weighted_f1([2, 2], [2, 2]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            binary_f1([1, 0], [1])

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.randoms())
    def test_permutation_invariance(self, pairs, rnd):
        p, l = map(np.array, zip(*pairs))
        perm = list(range(len(p)))
        rnd.shuffle(perm)
        assert multiclass_weighted_f1(p[perm], l[perm]) == multiclass_weighted_f1(p, l)
        assert binary_f1(p[perm] > 1, l[perm] > 1) == binary_f1(p > 1, l > 1)
        assert 0.0 <= multiclass_weighted_f1(p, l) <= 1.0


class TestRewardProbe:
    def test_separable_four_points(self):
        fs = FeatureSet(np.array([[0, 0], [0, 1], [3, 3], [3, 4]], np.float32), np.array([0, 0, 1, 1]),
                        "reward-binary")
        probe = fit_reward_probe(fs)
        assert probe.score(fs) == 1.0

    def test_single_class_rejected(self):
        fs = FeatureSet(np.zeros((5, 2), np.float32), np.zeros(5, np.int64), "reward-binary")
        with pytest.raises(ValueError, match="both classes"):
            fit_reward_probe(fs)

    def test_wrong_label_kind(self):
        fs = FeatureSet(np.zeros((5, 2), np.float32), np.arange(5) % 2, "action-id")
        with pytest.raises(ValueError, match="reward-binary"):
            fit_reward_probe(fs)

    @pytest.mark.parametrize("seed", range(3))
    def test_convex_uniqueness(self, seed):
        fs = _blobs(seed)
        a = fit_reward_probe(fs)
        b = fit_reward_probe(fs, init=stream(seed, "init"))
        for p in (a, b):
            assert p.diagnostics["converged"] and p.diagnostics["iterations"] <= 300
            assert p.diagnostics["grad_inf_norm"] <= 1e-6
        assert abs(a.diagnostics["final_loss"] - b.diagnostics["final_loss"]) <= 1e-6
        mid = LinearProbe((a.weight + b.weight) / 2, (a.bias + b.bias) / 2, "reward-binary")
        assert reward_probe_loss(mid, fs) <= max(reward_probe_loss(a, fs), reward_probe_loss(b, fs)) + 1e-9

    def test_nearly_separable_high_dim(self):
        # weak L2 on rare, almost separable positives is the ill-conditioned case
        fs = _blobs(7, n=3000, d=200, rate=0.03, shift=0.6)
        p = fit_reward_probe(fs, init=stream(1))
        assert p.diagnostics["converged"] and p.diagnostics["iterations"] <= 300

    def test_loss_reported_matches(self):
        fs = _blobs(4)
        p = fit_reward_probe(fs)
        assert reward_probe_loss(p, fs) == pytest.approx(p.diagnostics["final_loss"], abs=1e-9)

    def test_threshold_is_half(self):
        p = LinearProbe(np.array([[0.0], [1.0]]), np.array([0.0, 0.0]), "reward-binary")
        np.testing.assert_array_equal(p.predict(np.array([[-1e-9], [0.0], [2.0]])), [0, 1, 1])

    def test_regression_variant(self):
        fs = _blobs(2, shift=4.0)
        p = fit_reward_regression(fs, fs.labels.astype(float))
        assert p.score(fs) > 0.8

    def test_non_finite_weights(self):
        with pytest.raises(FloatingPointError):
            LinearProbe(np.array([[0.0], [np.nan]]), np.zeros(2), "reward-binary")


class TestActionProbe:
    def test_gamma_zero_is_cross_entropy(self):
        r = stream(3)
        z = Tensor(r.normal(size=(16, 5)))
        y = r.integers(0, 5, 16)
        ce = -ops.mean(ops.sum(ops.log_softmax(z, axis=-1) * ops.one_hot(y, 5), axis=-1))
        assert float(focal_loss(z, y, 0.0).data) == float(ce.data)
        assert float(focal_loss(z, y, 2.0).data) < float(ce.data)

    def test_single_class(self):
        fs = FeatureSet(stream(0).normal(size=(40, 3)).astype(np.float32), np.full(40, 2), "action-id")
        p = fit_action_probe(fs, n_classes=6, epochs=3)
        assert p.score(fs) == 1.0
        assert set(p.predict(fs.embeddings)) == {2}

    def test_expert_corpus_loss_decreases(self):
        corpus = generate_corpus(EnvSpec(), PolicySpec("expert"), 3000, "action-probe", stream(0, "a"))
        cfg = ModelConfig()
        params = init_model(cfg, stream(0, "m"))
        fs = FeatureSet(embed_corpus(params, cfg, corpus).astype(np.float32),
                        corpus.all_actions().astype(np.int64), "action-id")
        before = params.checksum()
        p = fit_action_probe(fs, n_classes=6)
        curve = p.diagnostics["epoch_loss"]
        assert len(curve) == 12 and all(b < a for a, b in zip(curve, curve[1:]))
        assert params.checksum() == before
        assert p.score(fs) > 0.2


class TestReport:
    def test_json_round_trip(self):
        rep = ProbeReport("m1", "reward", {"a": 0.5, "b": 0.25}, {"iterations": 3}, {"k": 0})
        assert rep.mean_f1 == 0.375
        again = ProbeReport.from_dict(__import__("json").loads(rep.to_json()))
        assert again.to_json() == rep.to_json()

    def test_f1_range(self):
        with pytest.raises(ValueError):
            ProbeReport("m", "reward", {"a": 1.5})


@pytest.fixture(scope="module")
def setup():
    corpus = generate_corpus(EnvSpec(), PolicySpec("random"), 2000, "reward-probe", stream(0, "p"))
    cfg = ModelConfig()
    return corpus, cfg, init_model(cfg, stream(1, "m"))


class TestPredictionProbe:
    def test_k_zero_is_standard_probe(self, setup):
        corpus, cfg, params = setup
        fs = prediction_features(params, cfg, corpus, 0, stream(0))
        np.testing.assert_array_equal(fs.embeddings, embed_corpus(params, cfg, corpus).astype(np.float32))
        assert fs.labels.sum() == (corpus.all_rewards() > 0).sum()

    def test_k_shift_labels(self, setup):
        corpus, cfg, params = setup
        fs = prediction_features(params, cfg, corpus, 3, stream(0))
        want = np.concatenate([(tr.rewards[3:] > 0) for tr in corpus]).astype(int)
        np.testing.assert_array_equal(fs.labels, want)
        assert fs.embeddings.shape == (len(want), cfg.encoder.dim)

    def test_untrained_matches_shuffled_control(self, setup):
        corpus, cfg, params = setup
        fs = prediction_features(params, cfg, corpus, 5, stream(2))
        train, ev = split(fs)
        f1 = fit_reward_probe(train).score(ev)
        shuffled = FeatureSet(fs.embeddings, stream(3).permutation(fs.labels), "reward-binary")
        train, ev = split(shuffled)
        assert abs(f1 - fit_reward_probe(train).score(ev)) <= 0.05

    def test_deterministic_and_bounded(self, setup):
        corpus, cfg, params = setup
        a = probe_predictions(params, cfg, corpus, 2, stream(5))
        b = probe_predictions(params, cfg, corpus, 2, stream(5))
        assert a.to_json() == b.to_json()
        with pytest.raises(ValueError, match="k must be"):
            prediction_features(params, cfg, corpus, cfg.transition.max_depth + 1, stream(0))
