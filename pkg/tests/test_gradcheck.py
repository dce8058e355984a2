import numpy as np
import pytest

from czsl import tensor as T
from czsl.gradcheck import check_parameters, finite_difference_check


class TestFiniteDifferenceCheck:
    def test_sum_of_squares_tight_error(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            x = T.Tensor(np.random.default_rng(seed).uniform(-1, 1, size=8), requires_grad=True)
            err = finite_difference_check(lambda t: T.tsum(t * t), x, h=1e-5)
            assert err <= 1e-6

    def test_constant_function_both_sides_zero(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        err = finite_difference_check(lambda t: T.Tensor(3.0, requires_grad=True) * 1.0, x)
        assert err == 0.0

    def test_nondeterministic_function_detected(self):
        x = T.Tensor([1.0], requires_grad=True)
        state = {"calls": 0}

        def noisy(t):
            state["calls"] += 1
            return T.tsum(t * float(state["calls"]))

        with pytest.raises(T.ContractError, match="deterministic"):
            finite_difference_check(noisy, x)

    def test_invalid_step_size(self):
        x = T.Tensor([1.0], requires_grad=True)
        with pytest.raises(T.ContractError):
            finite_difference_check(lambda t: T.tsum(t), x, h=0.0)

    def test_nonscalar_function_rejected(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(T.ContractError, match="scalar"):
            finite_difference_check(lambda t: t * t, x)

    def test_restores_input_exactly(self):
        x = T.Tensor([0.25, -0.75], requires_grad=True)
        before = x.data.copy()
        finite_difference_check(lambda t: T.tsum(T.sigmoid(t)), x)
        np.testing.assert_array_equal(x.data, before)


class TestCheckParameters:
    def test_multi_parameter_model(self):
        rng = np.random.default_rng(1)
        w = T.Parameter(rng.normal(size=(3, 2)), name="w")
        b = T.Parameter(rng.normal(size=2), name="b")
        frozen = T.Parameter(rng.normal(size=(3, 2)), name="frozen", frozen=True)
        x = np.random.default_rng(2).normal(size=(4, 3))

        def loss():
            y = T.matmul(T.Tensor(x), w) + b + T.matmul(T.Tensor(x), frozen)
            return T.tsum(T.gelu(y) * T.gelu(y))

        errors = check_parameters(loss, [w, b, frozen])
        assert set(errors) == {"w", "b"}  # frozen params are skipped
        assert max(errors.values()) <= 1e-6

    def test_shared_weight_used_twice(self):
        w = T.Parameter(np.array([[0.3, -0.2], [0.1, 0.5]]), name="shared")
        x = np.array([[1.0, 2.0]])

        def loss():
            h = T.matmul(T.Tensor(x), w)
            h = T.matmul(h, w)  # same weights applied twice, like shared layers
            return T.tsum(h * h)

        errors = check_parameters(loss, [w])
        assert errors["shared"] <= 1e-6
