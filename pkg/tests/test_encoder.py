import numpy as np
import pytest

from resop.encoder import (ConstantBasis, Dictionary, SirenBasis, fit_dictionary,
                           load_dictionary, reconstruction_errors, relative_mse,
                           save_dictionary, siren_eval, siren_init)
from resop.errors import ConfigError, ShapeError
from resop.fields import PointCloudSample
from resop.nn import MlpParams


class FnBasis:
    """Analytic stand-in basis for projection tests."""

    kind = "fn"

    def __init__(self, fn):
        self.fn = fn

    def evaluate(self, x):
        return self.fn(np.atleast_2d(x)[:, 0])


def span_dataset(n_samples=50, seed=42):
    """Functions drawn from span{1, sin 2 pi x, cos 2 pi x} on random point clouds."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_samples):
        m = int(rng.integers(40, 61))
        x = rng.uniform(0, 1, size=m)
        c = rng.normal(size=3)
        u = c[0] + c[1] * np.sin(2 * np.pi * x) + c[2] * np.cos(2 * np.pi * x)
        samples.append(PointCloudSample(id=i, locations=x[:, None], values=u))
    return samples


class TestSirenEval:
    def test_zero_weights_return_final_bias(self):
        params = MlpParams(
            (1, 4, 1), [np.zeros((1, 4)), np.zeros((4, 1))],
            [np.zeros(4), np.array([2.5])], "sine",
        )
        basis = SirenBasis(params, omega0=30.0)
        for x in (0.0, 0.3, -1.7):
            assert siren_eval(basis, [x]) == 2.5

    def test_single_unit_is_pure_sine(self):
        omega = np.pi
        params = MlpParams(
            (1, 1, 1), [np.array([[omega]]), np.array([[1.0]])],
            [np.zeros(1), np.zeros(1)], "sine",
        )
        basis = SirenBasis(params, omega0=omega)
        assert siren_eval(basis, [0.5]) == pytest.approx(np.sin(np.pi * 0.5), abs=1e-15)
        assert siren_eval(basis, [0.25]) == pytest.approx(np.sin(np.pi * 0.25), rel=1e-12)

    def test_purity(self):
        basis = siren_init((1, 16, 16, 1), omega0=30.0, seed=3)
        a = siren_eval(basis, [0.37])
        b = siren_eval(basis, [0.37])
        assert a == b

    def test_requires_sine_activation(self):
        params = MlpParams((1, 2, 1), [np.zeros((1, 2)), np.zeros((2, 1))],
                           [np.zeros(2), np.zeros(1)], "tanh")
        with pytest.raises(ConfigError):
            SirenBasis(params, omega0=30.0)


class TestProjection:
    def test_two_basis_normal_equations(self):
        d = Dictionary([FnBasis(lambda x: np.ones_like(x)), FnBasis(lambda x: x)],
                       lam=0.0)
        x = np.array([[0.0], [0.5], [1.0]])
        u = 2.0 + 3.0 * x[:, 0]
        emb = d.project(x, u)
        np.testing.assert_allclose(emb.alpha, [2.0, 3.0], atol=1e-10)
        # brute-force normal equations as an independent check
        psi = np.vstack([np.ones(3), x[:, 0]])
        alpha = np.linalg.solve(psi @ psi.T, psi @ u)
        np.testing.assert_allclose(emb.alpha, alpha, atol=1e-12)

    def test_scalar_ridge_shrinkage(self):
        d = Dictionary([FnBasis(lambda x: np.ones_like(x))], lam=1.0)
        x = np.zeros((3, 1))
        emb = d.project(x, np.ones(3))
        assert emb.alpha[0] == pytest.approx(3.0 / 4.0, rel=1e-14)

    def test_zero_values_give_zero_embedding(self):
        d = Dictionary([FnBasis(np.sin), FnBasis(np.cos)], lam=0.5)
        emb = d.project(np.linspace(0, 1, 7)[:, None], np.zeros(7))
        np.testing.assert_array_equal(emb.alpha, np.zeros(2))

    def test_projection_linear_in_values(self):
        rng = np.random.default_rng(0)
        d = Dictionary([FnBasis(lambda x: np.ones_like(x)), FnBasis(np.sin),
                        FnBasis(lambda x: x * x)], lam=1e-4)
        x = rng.uniform(0, 1, size=(25, 1))
        u1, u2 = rng.normal(size=25), rng.normal(size=25)
        a1 = d.project(x, u1).alpha
        a2 = d.project(x, u2).alpha
        a12 = d.project(x, u1 + u2).alpha
        np.testing.assert_allclose(a12, a1 + a2, atol=1e-10)

    def test_ridge_optimum_cannot_be_improved_by_perturbation(self):
        rng = np.random.default_rng(1)
        lam = 1e-3
        d = Dictionary([FnBasis(lambda x: np.ones_like(x)), FnBasis(np.sin),
                        FnBasis(np.cos)], lam=lam)
        x = rng.uniform(0, 1, size=(30, 1))
        u = rng.normal(size=30)
        alpha = d.project(x, u).alpha
        psi = d.evaluate(x)

        def objective(a):
            return np.sum((u - psi.T @ a) ** 2) + lam * np.sum(a ** 2)

        base = objective(alpha)
        for _ in range(25):
            delta = rng.normal(size=3)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert objective(alpha + delta) >= base

    def test_singular_system_falls_back_with_warning(self):
        ones = lambda x: np.ones_like(x)
        d = Dictionary([FnBasis(ones), FnBasis(ones)], lam=0.0)
        x = np.linspace(0, 1, 5)[:, None]
        with pytest.warns(RuntimeWarning):
            emb = d.project(x, np.ones(5))
        assert np.isfinite(emb.alpha).all()

    def test_empty_sample_rejected(self):
        d = Dictionary([FnBasis(np.sin)])
        with pytest.raises(ConfigError):
            d.project(np.zeros((0, 1)), np.zeros(0))

    def test_residual_postcondition(self):
        rng = np.random.default_rng(2)
        d = Dictionary([FnBasis(lambda x: np.ones_like(x)), FnBasis(np.sin),
                        FnBasis(np.cos)], lam=1e-6)
        x = rng.uniform(0, 1, size=(40, 1))
        u = rng.normal(size=40)
        alpha = d.project(x, u).alpha
        psi = d.evaluate(x)
        lhs = (psi @ psi.T + 1e-6 * np.eye(3)) @ alpha
        rhs = psi @ u
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * (1 + np.linalg.norm(rhs))


class TestReconstruct:
    def test_zero_alpha_gives_zero(self):
        d = Dictionary([FnBasis(np.sin), FnBasis(np.cos)])
        out = d.reconstruct(np.zeros(2), np.linspace(0, 1, 9)[:, None])
        np.testing.assert_array_equal(out, np.zeros(9))

    def test_exact_recovery_of_representable_function(self):
        d = Dictionary([FnBasis(lambda x: np.ones_like(x)), FnBasis(np.sin)], lam=0.0)
        x = np.linspace(0, 1, 12)[:, None]
        u = 0.7 - 1.3 * np.sin(x[:, 0])
        emb = d.project(x, u)
        rec = d.reconstruct(emb, x)
        assert np.abs(rec - u).max() <= 1e-8

    def test_matches_direct_basis_combination_on_any_grid(self):
        d = Dictionary([FnBasis(np.sin), FnBasis(np.cos)])
        alpha = np.array([0.5, -2.0])
        for grid in (np.linspace(0, 1, 5), np.linspace(0.1, 0.9, 17)):
            x = grid[:, None]
            direct = 0.5 * np.sin(grid) - 2.0 * np.cos(grid)
            np.testing.assert_allclose(d.reconstruct(alpha, x), direct, atol=1e-14)

    def test_length_mismatch_rejected(self):
        d = Dictionary([FnBasis(np.sin)])
        with pytest.raises(ShapeError):
            d.reconstruct(np.zeros(2), np.zeros((3, 1)))


class TestFitDictionary:
    def test_constant_dataset_needs_only_seed_basis(self):
        rng = np.random.default_rng(4)
        samples = []
        for i in range(10):
            m = int(rng.integers(5, 15))
            c = rng.normal()
            samples.append(PointCloudSample(
                id=i, locations=rng.uniform(0, 1, (m, 1)), values=np.full(m, c)))
        d, report = fit_dictionary(samples, tol=1e-10, max_bases=4, stage_epochs=10,
                                   lr=1e-3, seed=0)
        assert len(d) == 1
        assert isinstance(d.bases[0], ConstantBasis)
        assert report.final_error <= 1e-10

    def test_recovers_three_dimensional_span(self):
        samples = span_dataset(40, seed=11)
        d, report = fit_dictionary(samples, tol=1e-2, max_bases=6, stage_epochs=400,
                                   lr=1e-3, seed=5)
        assert report.reached_tol
        assert len(d) <= 6
        assert float(np.mean(reconstruction_errors(d, samples))) <= 1e-2

    def test_stage_errors_monotone_nonincreasing(self):
        samples = span_dataset(30, seed=12)
        _, report = fit_dictionary(samples, tol=1e-4, max_bases=5, stage_epochs=250,
                                   lr=1e-3, seed=6)
        errs = [e for _, e in report.stage_errors]
        for a, b in zip(errs, errs[1:]):
            assert b <= a + 1e-12

    def test_gram_diagnostic_reported(self):
        samples = span_dataset(20, seed=13)
        _, report = fit_dictionary(samples, tol=1e-1, max_bases=3, stage_epochs=100,
                                   lr=1e-3, seed=7)
        assert np.isfinite(report.gram_offdiag_mean)
        assert 0.0 <= report.gram_offdiag_mean <= 1.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError):
            fit_dictionary([], tol=1e-3, max_bases=3, stage_epochs=10, lr=1e-3, seed=0)


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        samples = span_dataset(10, seed=14)
        d, _ = fit_dictionary(samples, tol=1e-1, max_bases=3, stage_epochs=60,
                              lr=1e-3, seed=8)
        path = tmp_path / "dict.json"
        save_dictionary(d, path)
        d2 = load_dictionary(path)
        assert len(d2) == len(d)
        assert d2.lam == d.lam and d2.tol == d.tol
        x = np.linspace(0, 1, 33)[:, None]
        np.testing.assert_array_equal(d.evaluate(x), d2.evaluate(x))
        for b1, b2 in zip(d.bases, d2.bases):
            if b1.kind == "siren":
                assert b2.omega0 == b1.omega0
                for w1, w2 in zip(b1.params.arrays(), b2.params.arrays()):
                    np.testing.assert_array_equal(w1, w2)


def test_relative_mse_guard_for_zero_reference():
    assert relative_mse(np.zeros(4), np.zeros(4)) == 0.0
    assert relative_mse(np.zeros(4), 1e-3 * np.ones(4)) > 0
