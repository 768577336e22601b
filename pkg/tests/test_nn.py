import math

import numpy as np
import pytest

from resop import tape as tp
from resop.errors import ConfigError, ShapeError, TrainingError
from resop.nn import (AdamState, BoundMlp, MlpParams, activation_derivative,
                      activation_eval, adam_step, mlp_apply, mlp_forward, xavier_init)


class TestActivations:
    def test_mish_at_zero(self):
        assert activation_eval("mish", 0.0) == 0.0

    def test_mish_at_one_matches_independent_evaluation(self):
        # x * tanh(ln(1 + e)) evaluated straight from the math module
        expected = 1.0 * math.tanh(math.log(1.0 + math.e))
        assert activation_eval("mish", 1.0) == pytest.approx(expected, abs=1e-12)
        assert activation_eval("mish", 1.0) == pytest.approx(0.865098, abs=1e-6)

    def test_relu_negative_branch(self):
        assert activation_eval("relu", -2.0) == 0.0

    @pytest.mark.parametrize("kind", ["tanh", "mish", "sine"])
    def test_derivative_matches_numerical_on_grid(self, kind):
        h = 1e-6
        for x in np.linspace(-5.0, 5.0, 201):
            num = (activation_eval(kind, x + h) - activation_eval(kind, x - h)) / (2 * h)
            ana = activation_derivative(kind, x)
            assert abs(num - ana) / (abs(num) + 1e-8) <= 1e-6

    def test_unknown_activation_rejected(self):
        with pytest.raises(ConfigError):
            activation_eval("swish", 1.0)


class TestXavier:
    def test_deterministic_given_seed(self):
        a = xavier_init([2, 2], seed=42)
        b = xavier_init([2, 2], seed=42)
        for wa, wb in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(wa, wb)

    def test_weight_variance_matches_glorot_uniform(self):
        params = xavier_init([128, 128], seed=0)
        w = params.weights[0].ravel()
        assert w.size >= 10_000
        target = 2.0 / (128 + 128)
        assert abs(w.var() - target) / target < 0.2
        bound = math.sqrt(6.0 / 256)
        assert np.abs(w).max() <= bound

    def test_biases_zero(self):
        params = xavier_init([5, 7, 3], seed=1)
        for b in params.biases:
            assert not b.any()

    def test_empty_sizes_rejected(self):
        with pytest.raises(ConfigError):
            xavier_init([], seed=0)
        with pytest.raises(ConfigError):
            xavier_init([4], seed=0)


class TestMlpForward:
    def test_identity_single_layer(self):
        params = MlpParams((2, 2), [np.eye(2)], [np.zeros(2)], "tanh")
        t = tp.Tape()
        out = mlp_forward(params, np.array([1.0, 2.0]), t)
        np.testing.assert_array_equal(out.value, [1.0, 2.0])

    def test_all_zero_parameters_give_zero(self):
        params = MlpParams(
            (3, 4, 2), [np.zeros((3, 4)), np.zeros((4, 2))],
            [np.zeros(4), np.zeros(2)], "mish",
        )
        t = tp.Tape()
        out = mlp_forward(params, np.array([0.3, -1.0, 2.0]), t)
        np.testing.assert_array_equal(out.value, np.zeros(2))

    @pytest.mark.parametrize("activation", ["tanh", "mish", "relu", "sine"])
    def test_matches_straight_line_reevaluation_exactly(self, activation):
        rng = np.random.default_rng(7)
        params = xavier_init([3, 8, 8, 2], seed=9, activation=activation)
        x = rng.normal(size=(5, 3))
        t = tp.Tape()
        out = BoundMlp(t, params).apply(t.constant(x))
        # straight-line recomputation of the same arithmetic, same op order
        h = x
        for l, (w, b) in enumerate(zip(params.weights, params.biases)):
            h = h @ w + b
            if l < len(params.weights) - 1:
                h = {"tanh": np.tanh, "relu": lambda z: np.maximum(z, 0.0),
                     "sine": np.sin, "mish": tp._mish}[activation](h)
        np.testing.assert_array_equal(out.value, h)  # 0 ulp
        assert t.replay()

    def test_input_dimension_mismatch(self):
        params = xavier_init([3, 4, 1], seed=0)
        with pytest.raises(ShapeError):
            mlp_forward(params, np.ones(2), tp.Tape())

    def test_inconsistent_parameter_shapes_rejected(self):
        with pytest.raises(ShapeError):
            MlpParams((2, 3), [np.zeros((2, 4))], [np.zeros(3)], "tanh")

    def test_non_finite_parameters_rejected(self):
        w = np.zeros((2, 2))
        w[0, 0] = np.inf
        with pytest.raises(ShapeError):
            MlpParams((2, 2), [w], [np.zeros(2)], "tanh")


class TestAdam:
    def test_first_step_matches_hand_evaluation(self):
        p = [np.array(1.0)]
        st = AdamState.init(p, lr=1e-3)
        adam_step(st, p, [np.array(1.0)])
        # m_hat = v_hat = 1 exactly after one unit-gradient step
        expected = 1.0 - 1e-3 * (1.0 / (1.0 + 1e-8))
        assert float(p[0]) == expected
        assert st.step_count == 1

    def test_zero_gradients_are_a_fixed_point_from_fresh_state(self):
        p = [np.full(3, 2.5)]
        st = AdamState.init(p, lr=1e-2)
        for _ in range(5):
            adam_step(st, p, [np.zeros(3)])
        np.testing.assert_array_equal(p[0], np.full(3, 2.5))
        np.testing.assert_array_equal(st.first_moment[0], np.zeros(3))

    def test_moments_decay_under_zero_gradients(self):
        p = [np.full(3, 2.5)]
        st = AdamState.init(p, lr=1e-2)
        adam_step(st, p, [np.ones(3)])
        m1 = st.first_moment[0].copy()
        v1 = st.second_moment[0].copy()
        adam_step(st, p, [np.zeros(3)])
        assert np.all(np.abs(st.first_moment[0]) < np.abs(m1))
        assert np.all(st.second_moment[0] < v1)
        assert np.all(st.second_moment[0] >= 0)

    def test_two_runs_bit_identical(self):
        grads = [np.linspace(-1, 1, 4).reshape(2, 2)]

        def run():
            p = [np.arange(4.0).reshape(2, 2)]
            st = AdamState.init(p, lr=3e-4)
            for _ in range(10):
                adam_step(st, p, grads)
            return p[0], st.first_moment[0], st.second_moment[0]

        a, b = run(), run()
        for xa, xb in zip(a, b):
            np.testing.assert_array_equal(xa, xb)

    def test_non_finite_gradient_rejected(self):
        p = [np.zeros(2)]
        st = AdamState.init(p, lr=1e-3)
        with pytest.raises(TrainingError):
            adam_step(st, p, [np.array([1.0, np.nan])])

    def test_shape_mismatch_rejected(self):
        p = [np.zeros(2)]
        st = AdamState.init(p, lr=1e-3)
        with pytest.raises(ShapeError):
            adam_step(st, p, [np.zeros(3)])

    def test_invalid_hyperparameters_rejected(self):
        with pytest.raises(ConfigError):
            AdamState.init([np.zeros(1)], lr=-1.0)
        with pytest.raises(ConfigError):
            AdamState.init([np.zeros(1)], lr=1e-3, beta1=1.0)


def test_mlp_apply_agrees_with_tape_forward():
    params = xavier_init([4, 6, 1], seed=3, activation="mish")
    x = np.random.default_rng(4).normal(size=(9, 4))
    t = tp.Tape()
    taped = BoundMlp(t, params).apply(t.constant(x)).value
    np.testing.assert_array_equal(mlp_apply(params, x), taped)
