import numpy as np
import pytest

from czsl import tensor as T
from czsl.optim import Adam


def make_param(values, name="p", frozen=False):
    return T.Parameter(np.asarray(values, dtype=float), name=name, frozen=frozen)


class TestAdamStep:
    def test_zero_grad_zero_decay_leaves_parameter_unchanged(self):
        p = make_param([1.0, -2.0, 3.0])
        p.grad = np.zeros(3)
        opt = Adam([p], lr=0.1, weight_decay=0.0)
        before = p.data.copy()
        opt.step()
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_magnitude_is_learning_rate(self):
        # hand-evaluated step 1: m_hat = g, v_hat = g^2, update = lr*g/(|g|+eps)
        p = make_param([0.0])
        p.grad = np.array([0.37])
        opt = Adam([p], lr=1e-3, weight_decay=0.0)
        opt.step()
        assert p.data[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_update_direction_follows_sign(self):
        p = make_param([0.0, 0.0])
        p.grad = np.array([2.0, -0.5])
        opt = Adam([p], lr=1e-2, weight_decay=0.0)
        opt.step()
        assert p.data[0] < 0 < p.data[1]

    def test_frozen_parameter_bit_identical(self):
        p = make_param([1.0, 2.0], name="frozen", frozen=True)
        q = make_param([3.0], name="live")
        before = p.data.tobytes()
        opt = Adam([p, q], lr=0.5, weight_decay=0.1)
        for _ in range(10):
            q.grad = np.array([1.0])
            opt.step()
        assert p.data.tobytes() == before

    def test_missing_grad_names_parameter(self):
        p = make_param([1.0], name="model.block.weight")
        opt = Adam([p], lr=0.1)
        with pytest.raises(T.ContractError, match="model.block.weight"):
            opt.step()

    def test_grads_zeroed_after_step(self):
        p = make_param([1.0])
        p.grad = np.array([5.0])
        opt = Adam([p], lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.grad, [0.0])

    def test_step_counter_increments(self):
        p = make_param([1.0])
        opt = Adam([p], lr=0.1)
        for k in range(1, 4):
            p.grad = np.array([1.0])
            opt.step()
            assert opt.t == k

    def test_decoupled_weight_decay_shrinks_without_grad_signal(self):
        p = make_param([10.0])
        p.grad = np.zeros(1)
        opt = Adam([p], lr=0.1, weight_decay=0.5)
        opt.step()
        assert p.data[0] == pytest.approx(10.0 * (1 - 0.1 * 0.5))

    def test_lr_zero_is_a_no_op(self):
        p = make_param([1.0, 2.0])
        opt = Adam([p], lr=0.0, weight_decay=1e-5)
        for _ in range(5):
            p.grad = np.array([0.3, -0.7])
            opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])


class TestStepDecaySchedule:
    def test_factor_applied_every_period(self):
        p = make_param([0.0])
        opt = Adam([p], lr=1.0, step_period=5, step_factor=0.5)
        seen = []
        for _ in range(12):
            seen.append(opt.lr)
            opt.advance_epoch()
        assert seen[:5] == [1.0] * 5
        assert seen[5:10] == [0.5] * 5
        assert seen[10:] == [0.25] * 2

    def test_disabled_schedule_keeps_lr(self):
        p = make_param([0.0])
        opt = Adam([p], lr=0.3, step_period=0)
        for _ in range(7):
            opt.advance_epoch()
        assert opt.lr == 0.3


class TestAdamAgainstReference:
    def test_matches_handwritten_adam_sequence(self):
        # independent reference implementation, textbook update equations
        rng = np.random.default_rng(4)
        theta = rng.normal(size=4)
        p = make_param(theta.copy())
        opt = Adam([p], lr=0.01, weight_decay=0.0)
        m = np.zeros(4)
        v = np.zeros(4)
        for t in range(1, 8):
            g = rng.normal(size=4)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            theta = theta - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            p.grad = g.copy()
            opt.step()
        np.testing.assert_allclose(p.data, theta, atol=1e-12)
