import numpy as np
import pytest

from resop.errors import ConfigError
from resop.fields import (GrfConfig, sample_grf, squared_exp_kernel,
                          subsample_multires, tensor_grid_2d, uniform_grid_1d)


@pytest.fixture
def grid101():
    return uniform_grid_1d(101)


class TestKernel:
    def test_unit_diagonal(self, grid101):
        k = squared_exp_kernel(grid101, grid101, 0.2)
        np.testing.assert_array_equal(np.diag(k), np.ones(101))

    def test_exact_symmetry(self, grid101):
        k = squared_exp_kernel(grid101, grid101, 0.37)
        np.testing.assert_array_equal(k, k.T)

    def test_known_value(self):
        a = np.array([[0.0]])
        b = np.array([[0.2]])
        k = squared_exp_kernel(a, b, 0.2)
        assert k[0, 0] == pytest.approx(np.exp(-0.5), rel=1e-12)

    def test_2d_locations(self):
        g = tensor_grid_2d(4, 5)
        k = squared_exp_kernel(g, g, 0.3)
        assert k.shape == (20, 20)
        assert np.all(k > 0) and np.all(k <= 1)


class TestSampleGrf:
    def test_huge_lengthscale_gives_constant_fields(self, grid101):
        cfg = GrfConfig(mean=0.0, lengthscale=1e6, grid=grid101)
        fields = sample_grf(cfg, seed=0, count=5)
        spread = fields.max(axis=1) - fields.min(axis=1)
        assert np.all(spread < 1e-3)

    def test_monte_carlo_covariance_at_one_lengthscale(self, grid101):
        cfg = GrfConfig(mean=0.0, lengthscale=0.2, grid=grid101)
        fields = sample_grf(cfg, seed=1, count=10_000)
        i, j = 30, 50  # |x_i - x_j| = 0.2
        cov = np.mean(fields[:, i] * fields[:, j])
        assert abs(cov - np.exp(-0.5)) / np.exp(-0.5) < 0.10

    def test_mean_shift(self, grid101):
        cfg = GrfConfig(mean=1.25, lengthscale=0.2, grid=grid101)
        fields = sample_grf(cfg, seed=2, count=2000)
        assert abs(fields.mean() - 1.25) < 0.1

    def test_reproducible_per_seed(self, grid101):
        cfg = GrfConfig(mean=0.0, lengthscale=0.2, grid=grid101)
        a = sample_grf(cfg, seed=3, count=4)
        b = sample_grf(cfg, seed=3, count=4)
        np.testing.assert_array_equal(a, b)

    def test_invalid_configs_rejected(self, grid101):
        with pytest.raises(ConfigError):
            GrfConfig(mean=0.0, lengthscale=0.0, grid=grid101)
        with pytest.raises(ConfigError):
            GrfConfig(mean=0.0, lengthscale=0.2, grid=np.zeros((3, 1)))
        cfg = GrfConfig(mean=0.0, lengthscale=0.2, grid=grid101)
        with pytest.raises(ConfigError):
            sample_grf(cfg, seed=0, count=0)


class TestSubsample:
    def test_full_range_returns_permuted_grid(self, grid101):
        values = np.sin(grid101[:, 0])
        s = subsample_multires(grid101, values, 101, 101, seed=0)
        assert s.size == 101
        np.testing.assert_array_equal(np.sort(s.locations[:, 0]), grid101[:, 0])

    def test_bounds_hold_for_every_draw(self, grid101):
        values = np.zeros(101)
        rng = np.random.default_rng(5)
        for _ in range(300):
            s = subsample_multires(grid101, values, 10, 60, rng)
            assert 10 <= s.size <= 60

    def test_mean_draw_size_matches_uniform_distribution(self, grid101):
        values = np.zeros(101)
        rng = np.random.default_rng(6)
        sizes = [subsample_multires(grid101, values, 10, 60, rng).size
                 for _ in range(10_000)]
        assert abs(np.mean(sizes) - 35.0) < 2.0

    def test_subset_without_repetition_and_matching_values(self, grid101):
        values = np.cos(3 * grid101[:, 0])
        rng = np.random.default_rng(7)
        s = subsample_multires(grid101, values, 10, 60, rng)
        rows = {tuple(r) for r in s.locations}
        assert len(rows) == s.size  # distinct
        grid_rows = {tuple(r): v for r, v in zip(grid101, values)}
        for loc, val in zip(s.locations, s.values):
            assert grid_rows[tuple(loc)] == val

    def test_reproducible_per_seed(self, grid101):
        values = np.arange(101.0)
        a = subsample_multires(grid101, values, 10, 60, seed=8)
        b = subsample_multires(grid101, values, 10, 60, seed=8)
        np.testing.assert_array_equal(a.locations, b.locations)
        np.testing.assert_array_equal(a.values, b.values)

    def test_invalid_ranges_rejected(self, grid101):
        values = np.zeros(101)
        with pytest.raises(ConfigError):
            subsample_multires(grid101, values, 10, 102, seed=0)
        with pytest.raises(ConfigError):
            subsample_multires(grid101, values, 0, 50, seed=0)
        with pytest.raises(ConfigError):
            subsample_multires(grid101, values, 60, 10, seed=0)
