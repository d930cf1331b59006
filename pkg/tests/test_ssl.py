import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlprobe.autodiff import ParameterSet, ShapeError, Tape, Tensor, grad_check, ops, stream
from rlprobe.autodiff.rng import substream
from rlprobe.env import EnvSpec, PolicySpec, generate_corpus
from rlprobe.ssl import (
    DivergenceError,
    LossConfig,
    ModelConfig,
    TrainConfig,
    TransitionConfig,
    barlow_balanced_loss,
    barlow_loss,
    byol_loss,
    cross_correlation,
    encode,
    goal_reward,
    init_model,
    inverse_dynamics_loss,
    kl_balanced,
    pretrain,
    rollout_predictions,
    sample_goal,
)
from rlprobe.ssl.pretrain import make_target

B, K, D = 6, 3, 5


def _pair(seed, b=B, k=K, d=D):
    r = stream(seed)
    p = ParameterSet()
    p.add("a", r.normal(size=(b, k, d)))
    p.add("b", r.normal(size=(b, k, d)))
    return p


def _inverse_params(seed, d=D, hidden=7, n_actions=4):
    r = stream(seed)
    p = ParameterSet()
    p.add("y0", r.normal(size=(B, d)))
    p.add("y1", r.normal(size=(B, d)))
    p.add("w1", r.normal(size=(2 * d, hidden)) * 0.5)
    p.add("b1", r.normal(size=hidden) * 0.1)
    p.add("w2", r.normal(size=(hidden, n_actions)) * 0.5)
    p.add("b2", np.zeros(n_actions))
    return p, r.integers(0, n_actions, B)


def _head(p):
    return lambda a, c: ops.relu(ops.concat([a, c], axis=-1) @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"]


def _grads(fn, params):
    with Tape() as tape:
        loss = fn(params)
    return loss, tape.backward(loss)


class TestGradients:
    def test_byol(self):
        # the target branch is stopped, so only the online input and q are checked
        r = stream(1)
        p = ParameterSet()
        p.add("a", r.normal(size=(B, K, D)))
        p.add("q", r.normal(size=(D, D)))
        target = Tensor(r.normal(size=(B, K, D)))
        fn = lambda x: byol_loss(x["a"], target, q=lambda y: y @ x["q"])
        assert grad_check(fn, p, n_coords=100, rng=stream(2)) <= 1e-4

    def test_barlow(self):
        fn = lambda p: barlow_loss(p["a"], p["b"], 0.0051)
        assert grad_check(fn, _pair(3, b=8), n_coords=100, rng=stream(4)) <= 1e-4

    @pytest.mark.parametrize("mu", [0.0, 0.5, 0.7, 1.0])
    def test_barlow_balanced(self, mu):
        # only the un-stopped branch contributes to the analytic gradient, so the
        # finite-difference oracle is taken on that branch alone
        p = _pair(5, b=8)
        free = "a" if mu == 1.0 else "b" if mu == 0.0 else None
        if free is None:
            full = lambda q: barlow_loss(q["a"], q["b"])
            _, g_full = _grads(full, p)
            _, g_bal = _grads(lambda q: barlow_balanced_loss(q["a"], q["b"], mu), p)
            np.testing.assert_allclose(g_bal.of(p["a"]), mu * g_full.of(p["a"]), rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(g_bal.of(p["b"]), (1 - mu) * g_full.of(p["b"]), rtol=1e-10, atol=1e-12)
            assert grad_check(full, p, rng=stream(6)) <= 1e-4
        else:
            other = "b" if free == "a" else "a"
            sub = ParameterSet()
            sub.add(free, p[free].data)
            const = Tensor(p[other].data)
            fn = (lambda q: barlow_balanced_loss(q["a"], const, mu)) if free == "a" else \
                (lambda q: barlow_balanced_loss(const, q["b"], mu))
            assert grad_check(fn, sub, rng=stream(6)) <= 1e-4

    def test_inverse(self):
        p, acts = _inverse_params(7)
        fn = lambda q: inverse_dynamics_loss(_head(q), q["y0"], q["y1"], acts)
        assert grad_check(fn, p, n_coords=100, rng=stream(8)) <= 1e-4

    def test_kl(self):
        r = stream(9)
        post, prior = r.normal(size=(B, 4, 5)), r.normal(size=(B, 4, 5))
        for alpha, free in ((1.0, "prior"), (0.0, "post")):
            p = ParameterSet()
            p.add(free, post if free == "post" else prior)
            fn = (lambda q: kl_balanced(q["post"], Tensor(prior), 0.0)) if free == "post" else \
                (lambda q: kl_balanced(Tensor(post), q["prior"], 1.0))
            assert grad_check(fn, p, n_coords=100, rng=stream(10)) <= 1e-4
        # a mixed alpha splits the gradient linearly between the two terms
        p = ParameterSet()
        p.add("post", post)
        p.add("prior", prior)
        g = {a: _grads(lambda q: kl_balanced(q["post"], q["prior"], a), p)[1] for a in (0.0, 1.0, 0.8)}
        for k in ("post", "prior"):
            np.testing.assert_allclose(g[0.8].of(p[k]), 0.8 * g[1.0].of(p[k]) + 0.2 * g[0.0].of(p[k]),
                                       rtol=1e-10, atol=1e-14)


class TestByol:
    def test_values(self):
        p = _pair(0)
        assert float(byol_loss(p["a"], Tensor(p["a"].data)).data) == pytest.approx(-K)
        a = np.zeros((2, K, 2))
        a[..., 0] = 1.0
        b = np.zeros((2, K, 2))
        b[..., 1] = 3.0
        assert float(byol_loss(Tensor(a), Tensor(b)).data) == 0.0

    def test_target_branch_gradient_is_zero(self):
        p = _pair(1)
        _, g = _grads(lambda q: byol_loss(q["a"], q["b"]), p)
        assert np.all(g.of(p["b"]) == 0.0) and np.any(g.of(p["a"]) != 0.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(FloatingPointError):
            byol_loss(Tensor(np.zeros((1, 1, 3))), Tensor(np.ones((1, 1, 3))))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            byol_loss(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((2, 3, 5))))


class TestBarlow:
    def test_identity_correlation_is_zero(self):
        # orthogonal +-1 columns: standardized, pairwise uncorrelated
        h = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], float)[:, 1:]
        y = Tensor(h.reshape(2, 2, 3))
        np.testing.assert_allclose(cross_correlation(y, y).data, np.eye(3), atol=1e-12)
        assert float(barlow_loss(y, y).data) == pytest.approx(0.0, abs=1e-12)

    def test_all_copies(self):
        col = stream(0).normal(size=(8, 1))
        y = Tensor(np.repeat(col, 4, axis=1).reshape(4, 2, 4))
        assert float(barlow_loss(y, y, 0.0051).data) == pytest.approx(0.0051 * 4 * 3, rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_correlation_bounded(self, seed):
        p = _pair(seed, b=4)
        assert np.abs(cross_correlation(p["a"], p["b"]).data).max() <= 1 + 1e-9

    def test_zero_variance_names_dimension(self):
        a = stream(1).normal(size=(4, 2, 3))
        a[..., 2] = 5.0
        with pytest.raises(FloatingPointError, match="dimension \\(2,\\)"):
            barlow_loss(Tensor(a), Tensor(stream(2).normal(size=(4, 2, 3))))

    def test_single_sample_rejected(self):
        with pytest.raises(ValueError):
            barlow_loss(Tensor(np.ones((1, 1, 3))), Tensor(np.ones((1, 1, 3))))

    def test_balanced_forward_mu_independent(self):
        p = _pair(3)
        vals = {float(barlow_balanced_loss(p["a"], p["b"], mu).data) for mu in (0.0, 0.5, 0.7, 1.0)}
        assert len(vals) == 1 and vals.pop() == float(barlow_loss(p["a"], p["b"]).data)

    def test_mu_one_stops_target(self):
        p = _pair(4)
        _, g = _grads(lambda q: barlow_balanced_loss(q["a"], q["b"], 1.0), p)
        assert np.all(g.of(p["b"]) == 0.0)

    def test_mu_range(self):
        p = _pair(4)
        with pytest.raises(ValueError):
            barlow_balanced_loss(p["a"], p["b"], 1.5)


class TestAuxiliary:
    def test_inverse_uniform_head(self):
        y = Tensor(np.ones((5, 3)))
        head = lambda a, c: Tensor(np.zeros((5, 6)))
        assert float(inverse_dynamics_loss(head, y, y, np.arange(5)).data) == pytest.approx(np.log(6))

    def test_inverse_perfect_head(self):
        acts = np.array([0, 2, 1])
        head = lambda a, c: Tensor(60.0 * np.eye(3)[acts])
        assert float(inverse_dynamics_loss(head, Tensor(np.ones((3, 2))), Tensor(np.ones((3, 2))), acts).data) < 1e-20

    def test_kl_identical_zero_and_nonnegative(self):
        r = stream(0)
        a = r.normal(size=(4, 3, 5))
        assert float(kl_balanced(Tensor(a), Tensor(a)).data) == pytest.approx(0.0, abs=1e-12)
        for s in range(20):
            b = stream(s).normal(size=a.shape) * 3
            assert float(kl_balanced(Tensor(a), Tensor(b)).data) >= 0.0

    def test_kl_alpha_one_only_prior(self):
        r = stream(2)
        p = ParameterSet()
        p.add("post", r.normal(size=(3, 2, 4)))
        p.add("prior", r.normal(size=(3, 2, 4)))
        _, g = _grads(lambda q: kl_balanced(q["post"], q["prior"], 1.0), p)
        assert np.all(g.of(p["post"]) == 0.0) and np.any(g.of(p["prior"]) != 0.0)

    def test_losses_batch_permutation_invariant(self):
        p = _pair(6, b=7)
        perm = stream(1).permutation(7)
        q = _pair(6, b=7)
        for name in ("a", "b"):
            q[name].data[...] = q[name].data[perm]
        for f in (lambda x: byol_loss(x["a"], x["b"]), lambda x: barlow_loss(x["a"], x["b"]),
                  lambda x: kl_balanced(x["a"], x["b"])):
            assert float(f(q).data) == pytest.approx(float(f(p).data), abs=1e-12)
        ip, acts = _inverse_params(3)
        base = float(inverse_dynamics_loss(_head(ip), ip["y0"], ip["y1"], acts).data)
        perm = stream(2).permutation(B)
        shuffled = inverse_dynamics_loss(_head(ip), Tensor(ip["y0"].data[perm]), Tensor(ip["y1"].data[perm]),
                                         acts[perm])
        assert float(shuffled.data) == pytest.approx(base, abs=1e-12)


class TestGoal:
    def test_examples(self):
        g = np.array([1.0, 0.0])
        assert goal_reward(g, np.array([0.0, 2.0]), g) == pytest.approx(1 - np.exp(-2), abs=1e-12)
        assert goal_reward(np.array([1.0, 0.0]), np.array([0.0, 1.0]), g) == pytest.approx(0.8647, abs=5e-5)
        e = np.array([0.3, -2.0])
        assert goal_reward(e, e, g) == 0.0

    def test_zero_norm(self):
        with pytest.raises(FloatingPointError):
            goal_reward(np.zeros(2), np.ones(2), np.ones(2))

    @settings(max_examples=50)
    @given(st.lists(st.floats(-5, 5), min_size=9, max_size=9))
    def test_antisymmetric_and_bounded(self, v):
        a, b, g = (np.array(v[i:i + 3]) for i in (0, 3, 6))
        if min(np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(g)) < 1e-3:
            return
        r = goal_reward(a, b, g)
        assert goal_reward(b, a, g) == pytest.approx(-r, abs=1e-12)
        assert abs(r) <= 1 - np.exp(-4) + 1e-12

    def test_sample_goal_alpha_limits(self):
        emb = stream(0).normal(size=(5, 60, 4))
        g, cross = sample_goal(emb, 3, stream(1), alpha=0.0)
        for i in range(5):
            src = emb[i] if not cross[i] else emb
            assert np.any(np.all(np.isclose(src.reshape(-1, 4), g[i]), axis=1))
        g1, _ = sample_goal(emb, 3, stream(1), alpha=1.0)
        np.testing.assert_allclose(np.linalg.norm(g1, axis=1), 1.0, atol=1e-9)

    def test_sample_goal_horizon(self):
        t = 2
        emb = np.zeros((1, 100, 1))
        emb[0, :, 0] = np.arange(100)
        steps = {int(sample_goal(emb, t, stream(i), alpha=0.0)[0][0, 0]) for i in range(400)}
        assert min(steps) >= t + 1 and max(steps) <= t + 50 and len(steps) > 40

    def test_cross_frequency(self):
        emb = stream(0).normal(size=(10_000, 3, 2))
        _, cross = sample_goal(emb, 0, stream(3))
        assert abs(cross.mean() - 0.2) <= 0.01


class TestConfig:
    def test_defaults_consistent(self):
        cfg = ModelConfig()
        assert cfg.encoder.dim == 576 and cfg.encoder.out_shape == (16, 6, 6)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("kw", [{"objective": "byol", "target_mode": "shared"},
                                    {"objective": "barlow", "target_mode": "ema"},
                                    {"objective": "simclr"}])
    def test_target_mode_rules(self, kw):
        with pytest.raises(ValueError):
            LossConfig(**kw)

    def test_unknown_field(self):
        with pytest.raises(ValueError, match="bogus"):
            ModelConfig.from_dict({"loss": {"bogus": 1}})

    def test_depth_bound(self):
        with pytest.raises(ValueError):
            ModelConfig(transition=TransitionConfig(max_depth=3), loss=LossConfig(depth=5))


class TestNetworks:
    cfg = ModelConfig()

    def test_encode(self):
        params = init_model(self.cfg, stream(0))
        obs = stream(1).random((8, 4, 12, 12))
        obs[3] = obs[2]
        e = encode(params, self.cfg.encoder, obs).data
        assert e.shape == (8, 576)
        np.testing.assert_array_equal(e[2], e[3])
        assert e.std(axis=0).mean() > 0
        with pytest.raises(ShapeError, match="expected"):
            encode(params, self.cfg.encoder, obs[:, :3])

    @pytest.mark.parametrize("variant", ["conv-det", "gru-det", "gru-latent"])
    def test_rollout_prefix(self, variant):
        cfg = ModelConfig(transition=TransitionConfig(variant=variant))
        params = init_model(cfg, stream(0))
        e0 = encode(params, cfg.encoder, stream(1).random((3, 4, 12, 12)))
        acts = stream(2).integers(0, 6, (3, 4))
        long = rollout_predictions(params, cfg, e0, acts, rng=stream(3))
        one = rollout_predictions(params, cfg, e0, acts[:, :1], rng=stream(3))
        assert len(long.predictions) == 4 and long.predictions[0].shape == (3, 576)
        np.testing.assert_array_equal(one.predictions[0].data, long.predictions[0].data)
        with pytest.raises(ValueError):
            rollout_predictions(params, cfg, e0, np.zeros((3, 11), int), rng=stream(3))

    def test_conv_det_zero_weights_action_blind(self):
        cfg = ModelConfig(transition=TransitionConfig(variant="conv-det"))
        params = init_model(cfg, stream(0))
        for k in ("trans/conv0/w", "trans/conv0/b", "trans/conv1/w", "trans/conv1/b"):
            params[k].data[...] = 0.0
        e0 = encode(params, cfg.encoder, stream(1).random((2, 4, 12, 12)))
        a = rollout_predictions(params, cfg, e0, np.zeros((2, 2), int)).predictions
        b = rollout_predictions(params, cfg, e0, np.full((2, 2), 3)).predictions
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.data, y.data)

    def test_open_loop_stochasticity(self):
        e_obs = stream(1).random((4, 4, 12, 12))
        acts = stream(2).integers(0, 6, (4, 5))
        out = {}
        for variant in ("gru-latent", "gru-det"):
            cfg = ModelConfig(transition=TransitionConfig(variant=variant))
            params = init_model(cfg, stream(0))
            e0 = encode(params, cfg.encoder, e_obs)
            out[variant] = [np.stack([p.data for p in rollout_predictions(params, cfg, e0, acts,
                                                                          rng=stream(s)).predictions])
                            for s in (10, 11)]
        assert not np.array_equal(*out["gru-latent"])
        np.testing.assert_array_equal(*out["gru-det"])

    def test_latent_needs_rng(self):
        params = init_model(self.cfg, stream(0))
        e0 = encode(params, self.cfg.encoder, np.zeros((1, 4, 12, 12)))
        with pytest.raises(ValueError, match="rng"):
            rollout_predictions(params, self.cfg, e0, np.zeros((1, 2), int))

    def test_byol_owns_predictor(self):
        byol = init_model(ModelConfig(loss=LossConfig(objective="byol", target_mode="ema")), stream(0))
        assert any(k.startswith("pred/") for k in byol.keys())
        assert not any(k.startswith("pred/") for k in init_model(self.cfg, stream(0)).keys())


@pytest.fixture(scope="module")
def tiny_corpus():
    return generate_corpus(EnvSpec(), PolicySpec("weak"), 400, "pretrain", stream(0, "tiny"))


TINY = TrainConfig(epochs=1, batch_size=8, max_batches_per_epoch=2)


class TestPretrain:
    def test_zero_epochs_returns_init(self, tiny_corpus):
        cfg = ModelConfig()
        res = pretrain(tiny_corpus, cfg, TrainConfig(epochs=0), stream(1))
        assert res.params.checksum() == init_model(cfg, substream(stream(1), "init")).checksum()

    def test_deterministic_and_curves(self, tiny_corpus):
        cfg = ModelConfig()
        a = pretrain(tiny_corpus, cfg, TINY, stream(2))
        b = pretrain(tiny_corpus, cfg, TINY, stream(2))
        assert a.params.checksum() == b.params.checksum()
        assert set(a.curves) >= {"total", "pred", "inverse", "kl"} and len(a.curves["total"]) == 1
        assert a.curves_json() == b.curves_json()

    def test_frozen_random_target_unchanged(self, tiny_corpus):
        cfg = ModelConfig(loss=LossConfig(target_mode="frozen-random"))
        rng = stream(3)
        before = make_target(init_model(cfg, substream(rng, "init")), cfg, rng).checksum()
        res = pretrain(tiny_corpus, cfg, TINY, stream(3))
        assert res.target.checksum() == before

    def test_ema_target_moves_by_ema_only(self, tiny_corpus):
        cfg = ModelConfig(loss=LossConfig(objective="byol", target_mode="ema", inverse=False))
        res = pretrain(tiny_corpus, cfg, TINY, stream(4))
        init = init_model(cfg, substream(stream(4), "init"))
        k = "enc/conv0/w"
        assert not np.array_equal(res.target[k].data, init[k].data)
        assert not np.array_equal(res.target[k].data, res.params[k].data)

    def test_nan_aborts_with_epoch(self, tiny_corpus):
        cfg = ModelConfig()
        params = init_model(cfg, stream(5))
        params["proj/w"].data[0, 0] = np.nan
        with pytest.raises(DivergenceError) as err:
            pretrain(tiny_corpus, cfg, TINY, stream(5), params=params)
        assert err.value.epoch == 0 and "epoch 0" in str(err.value)

    def test_role_checked(self):
        c = generate_corpus(EnvSpec(), PolicySpec("random"), 200, "reward-probe", stream(0))
        with pytest.raises(ValueError, match="pretrain"):
            pretrain(c, ModelConfig(), TINY, stream(0))

    @pytest.mark.parametrize("variant", ["conv-det", "gru-det"])
    def test_other_variants_and_goal(self, tiny_corpus, variant):
        cfg = ModelConfig(transition=TransitionConfig(variant=variant), loss=LossConfig(goal=True))
        res = pretrain(tiny_corpus, cfg, TINY, stream(6))
        assert np.isfinite(res.curves["goal"][0]) and "kl" not in res.curves
