import numpy as np
import pytest

from lossland.errors import ConfigError
from lossland.net import (Batch, NetworkSpec, cross_entropy, error_on, forward,
                          gradient, init_params, pack, radial_distance, unpack)


def small_problem(rng, sizes=(4, 3, 2), n=5, scale=0.7):
    spec = NetworkSpec(sizes)
    params = rng.normal(0.0, scale, spec.parameter_count)
    X = rng.random((n, sizes[0]))
    y = rng.integers(0, sizes[-1], n)
    return spec, params, Batch(X, y)


def fd_gradient(spec, params, batch, h=1e-6):
    """Central-difference oracle, independent of the backprop path."""
    g = np.empty_like(params)
    for i in range(len(params)):
        hi = params.copy()
        lo = params.copy()
        hi[i] += h
        lo[i] -= h
        g[i] = (error_on(spec, hi, batch.inputs, batch.labels)
                - error_on(spec, lo, batch.inputs, batch.labels)) / (2 * h)
    return g


class TestNetworkSpec:
    def test_mnist_parameter_count(self):
        assert NetworkSpec((784, 128, 128, 10)).parameter_count == 118_282

    def test_rejects_short_or_invalid(self):
        with pytest.raises(ConfigError):
            NetworkSpec((5,))
        with pytest.raises(ConfigError):
            NetworkSpec((5, 0, 2))

    def test_pack_unpack_round_trip(self, rng):
        spec = NetworkSpec((3, 4, 2))
        params = rng.normal(size=spec.parameter_count)
        assert np.array_equal(pack(spec, unpack(spec, params)), params)


class TestForward:
    def test_zero_params_uniform(self, rng):
        spec = NetworkSpec((6, 4, 5))
        batch = Batch(rng.random((3, 6)), rng.integers(0, 5, 3))
        probs = forward(spec, np.zeros(spec.parameter_count), batch)
        assert np.allclose(probs, 1.0 / 5.0)

    def test_rows_sum_to_one(self, rng):
        spec, params, batch = small_problem(rng, (7, 5, 4), n=11, scale=2.0)
        probs = forward(spec, params, batch)
        assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-12)
        assert np.all(probs > 0.0) and np.all(probs < 1.0)

    def test_huge_bias_saturates(self):
        spec = NetworkSpec((2, 3, 5))
        params = np.zeros(spec.parameter_count)
        params[-5 + 3] = 50.0  # output bias of class 3
        probs = forward(spec, params, Batch(np.array([[0.2, 0.9]]), np.array([3])))
        assert probs[0, 3] > 0.999

    def test_dimension_mismatch(self, rng):
        spec = NetworkSpec((4, 3, 2))
        batch = Batch(rng.random((2, 5)), np.array([0, 1]))
        with pytest.raises(ConfigError):
            forward(spec, np.zeros(spec.parameter_count), batch)
        with pytest.raises(ConfigError):
            forward(spec, np.zeros(3), Batch(rng.random((2, 4)), np.array([0, 1])))

    def test_nonfinite_params_rejected(self, rng):
        spec, params, batch = small_problem(rng)
        params[0] = np.nan
        with pytest.raises(ConfigError):
            forward(spec, params, batch)

    def test_out_of_range_inputs_rejected(self, rng):
        with pytest.raises(ConfigError):
            Batch(rng.random((2, 3)) + 1.0, np.array([0, 1]))

    def test_deterministic(self, rng):
        spec, params, batch = small_problem(rng, (8, 6, 3), n=9)
        a = forward(spec, params, batch)
        b = forward(spec, params, batch)
        assert np.array_equal(a, b)

    def test_hidden_permutation_invariance(self, rng):
        spec = NetworkSpec((4, 3, 2))
        params = rng.normal(size=spec.parameter_count)
        batch = Batch(rng.random((6, 4)), rng.integers(0, 2, 6))
        perm = np.array([2, 0, 1])
        (W1, b1), (W2, b2) = unpack(spec, params)
        permuted = pack(spec, [(W1[:, perm], b1[perm]), (W2[perm, :], b2)])
        assert np.allclose(forward(spec, params, batch),
                           forward(spec, permuted, batch), atol=1e-12)


class TestCrossEntropy:
    def test_uniform_ten_classes(self):
        probs = np.full((4, 10), 0.1)
        assert cross_entropy(probs, np.array([0, 3, 7, 9])) == pytest.approx(
            np.log(10.0), abs=1e-12)

    def test_perfect_prediction(self):
        probs = np.eye(3)[[0, 1, 2, 1]]
        assert cross_entropy(probs, np.array([0, 1, 2, 1])) == 0.0

    def test_half_quarter(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        expected = (np.log(2.0) + np.log(4.0)) / 2.0
        assert cross_entropy(probs, np.array([0, 0])) == pytest.approx(expected, rel=1e-12)

    def test_zero_prob_clamped_and_logged(self, caplog):
        probs = np.array([[0.0, 1.0]])
        with caplog.at_level("WARNING", logger="lossland.net"):
            value = cross_entropy(probs, np.array([0]))
        assert value == pytest.approx(-np.log(1e-300))
        assert "clamped" in caplog.text

    def test_nonnegative_random(self, rng):
        for _ in range(20):
            raw = rng.random((6, 4)) + 1e-9
            probs = raw / raw.sum(axis=1, keepdims=True)
            assert cross_entropy(probs, rng.integers(0, 4, 6)) >= 0.0

    def test_matches_log_softmax_path(self, rng):
        spec, params, batch = small_problem(rng, (5, 4, 3), n=8)
        probs = forward(spec, params, batch)
        direct = error_on(spec, params, batch.inputs, batch.labels)
        assert cross_entropy(probs, batch.labels) == pytest.approx(direct, rel=1e-12)


class TestGradient:
    def test_against_finite_differences_many(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            width = int(rng.integers(2, 9))
            depth_sizes = (int(rng.integers(2, 9)), width, int(rng.integers(2, 6)))
            spec, params, batch = small_problem(rng, depth_sizes,
                                                n=int(rng.integers(2, 7)))
            g = gradient(spec, params, batch)
            fd = fd_gradient(spec, params, batch)
            denom = np.maximum(np.abs(fd), 1e-4)
            assert np.max(np.abs(g - fd) / denom) < 1e-6, f"trial {trial}"

    def test_stationary_at_interpolating_solution(self):
        # strongly separated logits -> softmax is one-hot to machine precision
        spec = NetworkSpec((2, 2))
        params = np.zeros(spec.parameter_count)
        (W, b), = [(w, bb) for w, bb in unpack(spec, params)]
        W[:] = np.array([[80.0, -80.0], [-80.0, 80.0]])
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([0, 1])
        g = gradient(spec, params, Batch(X, y))
        assert np.linalg.norm(g) < 1e-8

    def test_output_bias_gradient_is_mean_residual(self, rng):
        spec = NetworkSpec((2, 2))
        params = np.zeros(spec.parameter_count)
        X = np.array([[0.3, 0.3], [0.3, 0.3]])
        y = np.array([0, 1])
        g = gradient(spec, params, Batch(X, y))
        probs = forward(spec, params, Batch(X, y))
        onehot = np.eye(2)[y]
        expected_bias = (probs - onehot).mean(axis=0)
        assert np.allclose(g[-2:], expected_bias, atol=1e-15)
        # balanced two-class case: the residuals cancel exactly
        assert np.allclose(g[-2:], 0.0, atol=1e-15)

    def test_deterministic(self, rng):
        spec, params, batch = small_problem(rng, (6, 5, 4), n=10)
        assert np.array_equal(gradient(spec, params, batch),
                              gradient(spec, params, batch))


class TestRadialDistance:
    def test_zero_iff_identical(self, rng):
        v = rng.normal(size=17)
        assert radial_distance(v, v) == 0.0
        w = v.copy()
        w[3] += 1e-12
        assert radial_distance(v, w) > 0.0

    def test_three_four_five(self):
        assert radial_distance(np.array([3.0, 4.0]), np.zeros(2)) == 5.0

    def test_triangle_inequality(self, rng):
        for _ in range(10):
            a, b, c = (rng.normal(size=9) for _ in range(3))
            assert radial_distance(a, c) <= (radial_distance(a, b)
                                             + radial_distance(b, c) + 1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            radial_distance(np.zeros(3), np.zeros(4))


class TestInit:
    def test_bounds_and_zero_biases(self):
        spec = NetworkSpec((9, 4, 3))
        params = init_params(spec, seed=5)
        for (w_sl, b_sl, (n_in, _)) in spec.layer_slices():
            assert np.all(np.abs(params[w_sl]) <= 1.0 / np.sqrt(n_in))
            assert np.all(params[b_sl] == 0.0)

    def test_seeded(self):
        spec = NetworkSpec((9, 4, 3))
        assert np.array_equal(init_params(spec, 5), init_params(spec, 5))
        assert not np.array_equal(init_params(spec, 5), init_params(spec, 6))
