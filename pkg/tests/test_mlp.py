import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import nlpvq.mlp as mlp_mod
from nlpvq.mlp import (Committee, MlpPredictor, MlpVectorPredictor,
                       TrainingConfig, TrainingError, committee_forward,
                       flatten_params, init_net, lm_jacobian, lm_train,
                       load_predictor, mlp_forward, multi_start_train,
                       residual_vector, save_predictor)


def zero_net(input_dim=10, hidden_dim=2, output_dim=2):
    return MlpPredictor(
        hidden_weights=np.zeros((hidden_dim, input_dim)),
        hidden_bias=np.zeros(hidden_dim),
        output_weights=np.zeros((output_dim, hidden_dim)),
        output_bias=np.zeros(output_dim),
    )


def linear_ls_oracle(X, T):
    """Closed-form affine least squares: min over (A, b) of
    ||X A^T + b - T||^2; returns the optimal SSE."""
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design, T, rcond=None)
    residual = design @ coef - T
    return float(np.sum(residual ** 2))


class TestForward:
    def test_all_zero_net(self):
        out = mlp_forward(zero_net(), np.zeros(10))
        assert out.tolist() == [0.0, 0.0]

    def test_bias_pass_through(self):
        net = MlpPredictor(
            hidden_weights=np.zeros((2, 10)),
            hidden_bias=np.zeros(2),
            output_weights=np.zeros((2, 2)),
            output_bias=np.array([0.3, -0.2]),
        )
        out = mlp_forward(net, np.ones(10))
        assert out.tolist() == [0.3, -0.2]

    def test_single_tanh_path(self):
        w1 = np.zeros((2, 10))
        w1[0, 0] = 0.1
        w2 = np.zeros((2, 2))
        w2[0, 0] = 1.0
        net = MlpPredictor(hidden_weights=w1, hidden_bias=np.zeros(2),
                           output_weights=w2, output_bias=np.zeros(2))
        context = np.zeros(10)
        context[0] = 1.0
        out = mlp_forward(net, context)
        assert out[0] == pytest.approx(0.09966799462495582, abs=1e-15)
        assert out[1] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mlp_forward(zero_net(), np.zeros(9))


class TestCommittee:
    def test_single_member_equals_forward(self, rng):
        net = init_net(10, 2, 2, np.random.SeedSequence(0))
        committee = Committee(members=(net,))
        ctx = rng.uniform(-1, 1, 10)
        assert np.array_equal(committee_forward(committee, ctx),
                              mlp_forward(net, ctx))

    def test_two_member_average(self):
        a = MlpPredictor(np.zeros((2, 10)), np.zeros(2), np.zeros((2, 2)),
                         np.array([1.0, 0.0]))
        b = MlpPredictor(np.zeros((2, 10)), np.zeros(2), np.zeros((2, 2)),
                         np.array([0.0, 1.0]))
        out = committee_forward(Committee(members=(a, b)), np.zeros(10))
        assert out.tolist() == [0.5, 0.5]

    def test_identical_members_equal_single(self, rng):
        net = init_net(10, 2, 2, np.random.SeedSequence(5))
        ctx = rng.uniform(-1, 1, 10)
        single = mlp_forward(net, ctx)
        for k in (2, 5):
            committee = Committee(members=(net,) * k)
            assert np.allclose(committee_forward(committee, ctx), single,
                               atol=1e-15)

    def test_empty_committee_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            Committee(members=())

    def test_mismatched_members_rejected(self):
        with pytest.raises(ValueError, match="dimensions"):
            Committee(members=(zero_net(10, 2, 2), zero_net(8, 2, 2)))


class TestJacobian:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(2718)
        h = 1e-5
        for _ in range(100):
            dims = (int(rng.integers(2, 11)), int(rng.integers(1, 4)),
                    int(rng.integers(1, 4)))
            net = init_net(*dims, np.random.SeedSequence(int(rng.integers(1 << 30))))
            X = rng.uniform(-1, 1, (4, dims[0]))
            T = rng.uniform(-1, 1, (4, dims[2]))
            theta = flatten_params(net)
            analytic = lm_jacobian(theta, X, T, *dims)
            fd = np.zeros_like(analytic)
            for i in range(theta.size):
                up, down = theta.copy(), theta.copy()
                up[i] += h
                down[i] -= h
                e_up, _ = residual_vector(up, X, T, *dims)
                e_down, _ = residual_vector(down, X, T, *dims)
                fd[:, i] = (e_up - e_down) / (2 * h)
            scale = max(np.max(np.abs(analytic)), 1e-12)
            assert np.max(np.abs(analytic - fd)) / scale < 1e-4


class TestLmTrain:
    def test_fixed_point_returns_net_unchanged(self, rng):
        net = init_net(10, 2, 2, np.random.SeedSequence(11))
        X = rng.uniform(-1, 1, (20, 10))
        # targets = the net's own outputs, via the trainer's batch
        # evaluation path so the initial residual is exactly zero
        pred, _ = residual_vector(flatten_params(net), X,
                                  np.zeros((20, 2)), 10, 2, 2)
        T = pred.reshape(20, 2)
        result = lm_train(net, X, T, TrainingConfig())
        assert result.sse == 0.0
        assert np.array_equal(result.net.hidden_weights, net.hidden_weights)
        assert np.array_equal(result.net.output_bias, net.output_bias)

    def test_linear_regime_matches_least_squares_oracle(self, rng):
        A = rng.uniform(-0.5, 0.5, (2, 10))
        b = rng.uniform(-0.2, 0.2, 2)
        X = rng.uniform(-0.01, 0.01, (60, 10))
        T = X @ A.T + b
        oracle_sse = linear_ls_oracle(X, T)
        net = init_net(10, 2, 2, np.random.SeedSequence(3))
        cfg = TrainingConfig(weight_decay=0.0, max_lm_iterations=300)
        result = lm_train(net, X, T, cfg)
        assert result.sse <= oracle_sse + 1e-6

    def test_objective_history_monotone(self, rng):
        net = init_net(10, 2, 2, np.random.SeedSequence(7))
        X = rng.uniform(-1, 1, (40, 10))
        T = rng.uniform(-0.3, 0.3, (40, 2))
        result = lm_train(net, X, T, TrainingConfig())
        hist = result.objective_history
        assert all(b < a for a, b in zip(hist, hist[1:]))

    def test_sse_never_exceeds_initial(self, rng):
        for seed in range(10):
            net = init_net(6, 2, 2, np.random.SeedSequence(seed))
            X = rng.uniform(-1, 1, (15, 6))
            T = rng.uniform(-1, 1, (15, 2))
            e0, _ = residual_vector(flatten_params(net), X, T, 6, 2, 2)
            initial_sse = float(e0 @ e0)
            result = lm_train(net, X, T, TrainingConfig(max_lm_iterations=20))
            assert result.sse <= initial_sse

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="at least 1"):
            lm_train(zero_net(), np.zeros((0, 10)), np.zeros((0, 2)),
                     TrainingConfig())

    def test_abort_on_non_finite_jacobian(self, rng, monkeypatch):
        net = init_net(10, 2, 2, np.random.SeedSequence(1))
        X = rng.uniform(-1, 1, (5, 10))
        T = rng.uniform(-1, 1, (5, 2))
        monkeypatch.setattr(
            mlp_mod, "lm_jacobian",
            lambda *args: np.full((10, flatten_params(net).size), np.nan))
        result = lm_train(net, X, T, TrainingConfig())
        assert result.aborted
        assert np.array_equal(result.net.hidden_weights, net.hidden_weights)


class TestMultiStart:
    def test_single_start_no_committee(self, rng):
        X = rng.uniform(-1, 1, (30, 10))
        T = rng.uniform(-0.5, 0.5, (30, 2))
        cfg = TrainingConfig(num_starts=1, committee=False,
                             max_lm_iterations=5)
        committee = multi_start_train(X, T, cfg)
        assert len(committee.members) == 1

    def test_deterministic_for_fixed_seed(self, rng):
        X = rng.uniform(-1, 1, (30, 10))
        T = rng.uniform(-0.5, 0.5, (30, 2))
        cfg = TrainingConfig(rng_seed=77, max_lm_iterations=8)
        c1 = multi_start_train(X, T, cfg)
        c2 = multi_start_train(X, T, cfg)
        for a, b in zip(c1.members, c2.members):
            assert np.array_equal(a.hidden_weights, b.hidden_weights)
            assert np.array_equal(a.output_weights, b.output_weights)

    def test_best_not_worse_than_median(self, rng):
        X = rng.uniform(-1, 1, (40, 10))
        T = rng.uniform(-0.5, 0.5, (40, 2))
        cfg = TrainingConfig(num_starts=5, max_lm_iterations=10)
        committee = multi_start_train(X, T, cfg)
        sses = np.array(committee.member_sses)
        assert sses.min() <= np.median(sses)

    def test_best_only_when_committee_off(self, rng):
        X = rng.uniform(-1, 1, (40, 10))
        T = rng.uniform(-0.5, 0.5, (40, 2))
        both = multi_start_train(X, T, TrainingConfig(max_lm_iterations=10))
        best = multi_start_train(
            X, T, TrainingConfig(max_lm_iterations=10, committee=False))
        assert len(best.members) == 1
        assert best.member_sses[0] == min(both.member_sses)

    def test_all_aborted_raises(self, rng, monkeypatch):
        X = rng.uniform(-1, 1, (5, 10))
        T = rng.uniform(-1, 1, (5, 2))
        monkeypatch.setattr(
            mlp_mod, "lm_jacobian",
            lambda theta, *args: np.full((10, theta.size), np.nan))
        with pytest.raises(TrainingError, match="aborted"):
            multi_start_train(X, T, TrainingConfig(num_starts=2))


class TestConfigValidation:
    def test_bad_schedule_rejected(self):
        with pytest.raises(ValueError):
            TrainingConfig(mu_increase=0.5)
        with pytest.raises(ValueError):
            TrainingConfig(mu_decrease=1.5)
        with pytest.raises(ValueError):
            TrainingConfig(num_starts=0)
        with pytest.raises(ValueError):
            TrainingConfig(weight_decay=-1e-3)


class TestSerialization:
    def test_json_round_trip_exact(self, tmp_path):
        net = init_net(10, 2, 2, np.random.SeedSequence(123))
        path = tmp_path / "net.json"
        save_predictor(net, path)
        loaded = load_predictor(path)
        assert np.array_equal(loaded.hidden_weights, net.hidden_weights)
        assert np.array_equal(loaded.hidden_bias, net.hidden_bias)
        assert np.array_equal(loaded.output_weights, net.output_weights)
        assert np.array_equal(loaded.output_bias, net.output_bias)


class TestEstimator:
    def test_fit_predict_shapes(self, rng):
        X = rng.uniform(-1, 1, (50, 10))
        T = rng.uniform(-0.5, 0.5, (50, 2))
        est = MlpVectorPredictor(max_lm_iterations=5).fit(X, T)
        pred = est.predict(X[:7])
        assert pred.shape == (7, 2)
        assert len(est.committee_.members) == 5

    def test_deterministic_with_random_state(self, rng):
        X = rng.uniform(-1, 1, (50, 10))
        T = rng.uniform(-0.5, 0.5, (50, 2))
        p1 = MlpVectorPredictor(max_lm_iterations=5, random_state=3) \
            .fit(X, T).predict(X[:5])
        p2 = MlpVectorPredictor(max_lm_iterations=5, random_state=3) \
            .fit(X, T).predict(X[:5])
        assert np.array_equal(p1, p2)

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            MlpVectorPredictor().predict(np.zeros((1, 10)))

    def test_clone_keeps_params(self):
        est = MlpVectorPredictor(num_starts=3, weight_decay=1e-3)
        assert clone(est).get_params() == est.get_params()

    def test_mismatched_rows_rejected(self, rng):
        with pytest.raises(ValueError, match="same number of rows"):
            MlpVectorPredictor().fit(rng.uniform(-1, 1, (10, 10)),
                                     rng.uniform(-1, 1, (9, 2)))
