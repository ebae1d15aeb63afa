import numpy as np
import pytest

from lossland.errors import ConfigError
from lossland.hessian import (HvpConfig, fd_hvp, hvp, hvp_regularized,
                              lanczos_extreme, read_spectrum_csv,
                              write_spectrum_csv)
from lossland.mnist import Dataset
from lossland.net import NetworkSpec


@pytest.fixture
def net_point(rng):
    spec = NetworkSpec((4, 3, 2))
    params = rng.normal(0.0, 0.8, spec.parameter_count)
    data = Dataset(images=rng.random((6, 4)), labels=rng.integers(0, 2, 6),
                   split="train")
    return spec, params, data


class TestQuadraticOperator:
    """E = 0.5 * theta' A theta has gradient A theta and Hessian exactly A."""

    def setup_method(self):
        rng = np.random.default_rng(11)
        raw = rng.normal(size=(7, 7))
        self.A = 0.5 * (raw + raw.T)
        self.grad = lambda theta: self.A @ theta

    def test_fd_mode_recovers_A(self, rng):
        theta = rng.normal(size=7)
        v = rng.normal(size=7)
        out = fd_hvp(self.grad, theta, v, fd_step=1e-6)
        assert np.allclose(out, self.A @ v, atol=1e-8)

    def test_shift_moves_eigenvector_by_two_beta(self, rng):
        evals, evecs = np.linalg.eigh(self.A)
        v = evecs[:, -1]
        beta = 0.25
        shifted = self.A @ v + 2.0 * beta * v
        assert np.allclose(shifted, (evals[-1] + 2.0 * beta) * v, atol=1e-10)
        # the same identity through the fd machinery
        out = fd_hvp(self.grad, np.zeros(7), v, fd_step=1e-6) + 2.0 * beta * v
        assert np.allclose(out, (evals[-1] + 2.0 * beta) * v, atol=1e-8)


class TestNetworkHvp:
    def test_exact_vs_finite_difference(self, rng):
        for trial in range(8):
            spec = NetworkSpec((4, 3, 2))
            params = rng.normal(0.0, 0.8, spec.parameter_count)
            data = Dataset(images=rng.random((5, 4)),
                           labels=rng.integers(0, 2, 5), split="train")
            v = rng.normal(size=spec.parameter_count)
            exact = hvp(spec, params, v, data, HvpConfig(mode="exact"))
            fd = hvp(spec, params, v, data,
                     HvpConfig(mode="finite_difference", fd_step=1e-5))
            rel = np.linalg.norm(exact - fd) / np.linalg.norm(exact)
            assert rel < 1e-5, f"trial {trial}: rel={rel}"

    def test_symmetry(self, net_point, rng):
        spec, params, data = net_point
        for _ in range(5):
            u = rng.normal(size=spec.parameter_count)
            v = rng.normal(size=spec.parameter_count)
            lhs = u @ hvp(spec, params, v, data)
            rhs = v @ hvp(spec, params, u, data)
            bound = 1e-7 * np.linalg.norm(u) * np.linalg.norm(v)
            assert abs(lhs - rhs) <= bound

    def test_linearity(self, net_point, rng):
        spec, params, data = net_point
        u = rng.normal(size=spec.parameter_count)
        v = rng.normal(size=spec.parameter_count)
        combo = hvp(spec, params, 1.3 * u - 0.7 * v, data)
        parts = 1.3 * hvp(spec, params, u, data) - 0.7 * hvp(spec, params, v, data)
        assert np.allclose(combo, parts, atol=1e-8)

    def test_zero_direction_rejected(self, net_point):
        spec, params, data = net_point
        with pytest.raises(ConfigError):
            hvp(spec, params, np.zeros(spec.parameter_count), data)

    def test_regularized_beta_zero_identical(self, net_point, rng):
        spec, params, data = net_point
        v = rng.normal(size=spec.parameter_count)
        plain = hvp(spec, params, v, data)
        reg = hvp_regularized(spec, params, v, data, None, 0.0)
        assert np.array_equal(plain, reg)

    def test_regularized_adds_two_beta_v(self, net_point, rng):
        spec, params, data = net_point
        v = rng.normal(size=spec.parameter_count)
        beta = 0.01
        reg = hvp_regularized(spec, params, v, data, np.zeros_like(params), beta)
        plain = hvp(spec, params, v, data)
        assert np.allclose(reg - plain, 2.0 * beta * v, atol=1e-14)

    def test_fd_step_validation(self):
        with pytest.raises(ConfigError):
            HvpConfig(mode="finite_difference", fd_step=0.5)
        with pytest.raises(ConfigError):
            HvpConfig(mode="spectral")


class TestLanczos:
    def test_diagonal_top_five(self):
        d = np.arange(1.0, 101.0)
        rep = lanczos_extreme(lambda x: d * x, dim=100, k=5, max_iters=100, seed=3)
        assert np.allclose(rep.ritz_values, [100.0, 99.0, 98.0, 97.0, 96.0],
                           atol=1e-8)
        assert np.all(rep.residual_norms <= 1e-6)

    def test_most_negative_from_negated_run(self):
        d = np.concatenate([[-2.0], np.linspace(0.1, 5.0, 59)])
        rep = lanczos_extreme(lambda x: d * x, dim=60, k=3, max_iters=60, seed=5)
        assert rep.most_negative == pytest.approx(-2.0, abs=1e-6)
        assert rep.ritz_values[0] == pytest.approx(5.0, abs=1e-6)

    def test_shifted_operator_spectrum_shift(self):
        d = np.linspace(-1.0, 4.0, 80)
        beta = 0.01
        top = lanczos_extreme(lambda x: d * x, dim=80, k=10, max_iters=80, seed=2)
        shifted = lanczos_extreme(lambda x: d * x + 2 * beta * x, dim=80, k=10,
                                  max_iters=80, seed=2)
        assert np.allclose(shifted.ritz_values - top.ritz_values, 2 * beta,
                           atol=1e-6)

    def test_rayleigh_quotients_bracketed_by_extreme_ritz(self, rng):
        raw = rng.normal(size=(40, 40))
        A = 0.5 * (raw + raw.T)
        rep = lanczos_extreme(lambda x: A @ x, dim=40, k=5, max_iters=40, seed=7)
        res = float(np.max(rep.residual_norms)) + 1e-9
        for _ in range(100):
            u = rng.normal(size=40)
            rq = float(u @ (A @ u) / (u @ u))
            assert rep.most_negative - res <= rq <= rep.ritz_values[0] + res

    def test_deterministic(self):
        d = np.linspace(0.5, 9.5, 50)
        a = lanczos_extreme(lambda x: d * x, dim=50, k=4, max_iters=30, seed=11)
        b = lanczos_extreme(lambda x: d * x, dim=50, k=4, max_iters=30, seed=11)
        assert np.array_equal(a.ritz_values, b.ritz_values)
        assert a.most_negative == b.most_negative

    def test_breakdown_restart_on_low_rank(self):
        # rank-2 operator: Krylov space exhausts after 2 vectors, forcing restarts
        d = np.zeros(30)
        d[0], d[1] = 3.0, 1.0
        rep = lanczos_extreme(lambda x: d * x, dim=30, k=3, max_iters=12, seed=1)
        assert rep.ritz_values[0] == pytest.approx(3.0, abs=1e-8)
        assert rep.ritz_values[1] == pytest.approx(1.0, abs=1e-8)
        assert rep.ritz_values[2] == pytest.approx(0.0, abs=1e-8)

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            lanczos_extreme(lambda x: x, dim=10, k=11, max_iters=12, seed=0)
        with pytest.raises(ConfigError):
            lanczos_extreme(lambda x: x, dim=10, k=2, max_iters=11, seed=0)


class TestSpectrumCsv:
    def test_round_trip(self, tmp_path):
        d = np.arange(1.0, 31.0)
        rep = lanczos_extreme(lambda x: d * x, dim=30, k=4, max_iters=30, seed=0,
                              point_id="abc123")
        path = tmp_path / "spectrum.csv"
        write_spectrum_csv(path, [(1.5, rep)])
        rows = read_spectrum_csv(path)
        assert rows[0]["point_id"] == "abc123"
        assert rows[0]["r_ref"] == 1.5
        assert rows[0]["ritz_1"] == pytest.approx(30.0, abs=1e-8)
        again = tmp_path / "again.csv"
        write_spectrum_csv(again, [(1.5, rep)])
        assert path.read_bytes() == again.read_bytes()
