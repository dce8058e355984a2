import math

import numpy as np
import pytest

from czsl import tensor as T
from czsl.gradcheck import finite_difference_check
from helpers import PRIMITIVE_CASES


class TestMatmul:
    def test_identity(self):
        a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(T.Tensor(np.eye(2)), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_hand_case(self):
        # row-by-column arithmetic: [[1,2],[3,4]] @ [[5],[6]]
        out = T.matmul(T.Tensor([[1.0, 2.0], [3.0, 4.0]]), T.Tensor([[5.0], [6.0]]))
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_zero_matrix(self):
        rng = np.random.default_rng(0)
        b = T.Tensor(rng.normal(size=(3, 4)))
        out = T.matmul(T.Tensor(np.zeros((2, 3))), b)
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_shape_mismatch_names_both_shapes(self):
        a = T.Tensor(np.zeros((2, 3)))
        b = T.Tensor(np.zeros((4, 2)))
        with pytest.raises(T.ShapeError) as err:
            T.matmul(a, b)
        assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)

    def test_associativity(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = T.Tensor(rng.normal(size=(4, 5)))
            b = T.Tensor(rng.normal(size=(5, 3)))
            c = T.Tensor(rng.normal(size=(3, 6)))
            left = T.matmul(T.matmul(a, b), c).data
            right = T.matmul(a, T.matmul(b, c)).data
            np.testing.assert_allclose(left, right, atol=1e-9)

    def test_gradient_flows_to_both_operands(self):
        a = T.Tensor([[1.0, 2.0]], requires_grad=True)
        b = T.Tensor([[3.0], [4.0]], requires_grad=True)
        T.matmul(a, b).backward()
        np.testing.assert_array_equal(a.grad, [[3.0, 4.0]])
        np.testing.assert_array_equal(b.grad, [[1.0], [2.0]])


class TestSoftmaxRows:
    def test_uniform_logits(self):
        out = T.softmax_rows(T.Tensor([[2.5, 2.5, 2.5]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)

    def test_closed_form_ratio(self):
        out = T.softmax_rows(T.Tensor([[0.0, math.log(2.0)]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 2 / 3]], atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 7))
        a = T.softmax_rows(T.Tensor(x)).data
        b = T.softmax_rows(T.Tensor(x + 11.75)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one_over_wide_range(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            x = rng.uniform(-50, 50, size=(6, 9))
            s = T.softmax_rows(T.Tensor(x)).data.sum(axis=-1)
            np.testing.assert_allclose(s, 1.0, atol=1e-9)
            assert (T.softmax_rows(T.Tensor(x)).data >= 0).all()


class TestSigmoid:
    def test_symmetry_point(self):
        assert T.sigmoid(T.Tensor(0.0)).item() == 0.5

    def test_saturation(self):
        out = T.sigmoid(T.Tensor([30.0, 55.0, 700.0]))
        np.testing.assert_allclose(out.data, 1.0, atol=1e-9)

    def test_log3(self):
        # 1 / (1 + 1/3)
        assert T.sigmoid(T.Tensor(math.log(3.0))).item() == pytest.approx(0.75, abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(1)
        out = T.sigmoid(T.Tensor(rng.uniform(-30, 30, size=100))).data
        assert ((out > 0) & (out < 1)).all()


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        x = T.Tensor([[4.0, 4.0, 4.0]])
        gamma = T.Tensor(np.ones(3))
        beta = T.Tensor(np.zeros(3))
        out = T.layer_norm(x, gamma, beta)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_already_standardized_row(self):
        x = T.Tensor([[1.0, -1.0]])
        out = T.layer_norm(x, T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-6)

    def test_beta_shift_property(self):
        rng = np.random.default_rng(5)
        x = T.Tensor(rng.normal(size=(4, 6)))
        gamma = T.Tensor(rng.normal(size=6))
        b = rng.normal(size=6)
        base = T.layer_norm(x, gamma, T.Tensor(np.zeros(6))).data
        shifted = T.layer_norm(x, gamma, T.Tensor(b)).data
        np.testing.assert_allclose(shifted, base + b, atol=1e-12)

    def test_dimension_mismatch(self):
        x = T.Tensor(np.zeros((2, 5)))
        with pytest.raises(T.ShapeError):
            T.layer_norm(x, T.Tensor(np.ones(4)), T.Tensor(np.zeros(4)))


class TestCrossEntropy:
    def test_perfect_prediction(self):
        probs = T.Tensor(np.eye(3))
        loss = T.cross_entropy(probs, [0, 1, 2])
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_half_probability(self):
        probs = T.Tensor([[0.5, 0.5]])
        assert T.cross_entropy(probs, [0]).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_uniform_rows(self):
        for k in (2, 5, 48):
            probs = T.Tensor(np.full((3, k), 1.0 / k))
            assert T.cross_entropy(probs, [0, 1, k - 1]).item() == pytest.approx(
                math.log(k), abs=1e-12
            )

    def test_out_of_range_label(self):
        probs = T.Tensor(np.full((2, 3), 1 / 3))
        with pytest.raises(IndexError):
            T.cross_entropy(probs, [0, 3])

    def test_zero_probability_clamped_and_flagged(self):
        probs = T.Tensor([[1.0, 0.0]])
        stats = {}
        loss = T.cross_entropy(probs, [1], stats=stats)
        assert stats["clamped"] == 1
        assert loss.item() == pytest.approx(-math.log(T.CE_PROB_FLOOR), rel=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(11)
        logits = rng.normal(size=(8, 5))
        probs = T.softmax_rows(T.Tensor(logits))
        labels = rng.integers(0, 5, size=8)
        assert T.cross_entropy(probs, labels).item() >= 0.0


class TestBackward:
    def test_sum_of_squares(self):
        x = T.Tensor([3.0], requires_grad=True)
        loss = T.tsum(x * x)
        loss.backward()
        np.testing.assert_allclose(x.grad, [6.0], atol=1e-15)

    def test_disconnected_leaf_gets_no_gradient(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        p = T.Tensor([5.0], requires_grad=True)
        T.tsum(x * x).backward()
        assert p.grad is None  # semantically zero

    def test_double_backward_accumulates(self):
        x = T.Tensor([2.0], requires_grad=True)
        T.tsum(x * x).backward()
        g1 = x.grad.copy()
        T.tsum(x * x).backward()
        np.testing.assert_allclose(x.grad, 2 * g1)

    def test_non_scalar_loss_rejected(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(T.ContractError):
            (x * x).backward()

    def test_softmax_ce_gradient_is_probs_minus_onehot(self):
        rng = np.random.default_rng(7)
        logits = T.Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        labels = np.array([1, 0, 4, 2])
        probs = T.softmax_rows(logits)
        T.cross_entropy(probs, labels).backward()
        onehot = np.zeros((4, 5))
        onehot[np.arange(4), labels] = 1.0
        np.testing.assert_allclose(logits.grad, (probs.data - onehot) / 4.0, atol=1e-12)

    def test_shared_node_accumulates_through_both_paths(self):
        x = T.Tensor([1.5], requires_grad=True)
        y = x * 3.0
        loss = T.tsum(y * y + y)  # d/dx = 2*9*x + 3
        loss.backward()
        np.testing.assert_allclose(x.grad, [2 * 9 * 1.5 + 3.0], atol=1e-12)


class TestNoGrad:
    def test_no_tape_inside_context(self):
        x = T.Tensor([1.0], requires_grad=True)
        with T.no_grad():
            y = x * x
        assert not y.requires_grad and y._parents == ()

    def test_restores_on_exit(self):
        x = T.Tensor([1.0], requires_grad=True)
        with T.no_grad():
            pass
        y = x * x
        assert y.requires_grad


class TestFiniteInvariant:
    def test_nan_rejected_at_construction(self):
        with pytest.raises(T.ContractError):
            T.Tensor([1.0, float("nan")])

    def test_inf_rejected_at_construction(self):
        with pytest.raises(T.ContractError):
            T.Tensor([float("inf")])

    def test_find_first_nonfinite(self):
        x = T.Tensor([1.0], requires_grad=True)
        with np.errstate(divide="ignore"):
            y = T.tlog(x - 1.0)  # -inf
        z = y * 2.0
        bad = T.find_first_nonfinite(z)
        assert bad is not None and bad.op == "log"


class TestDropout:
    def test_identity_in_eval_mode(self):
        x = T.Tensor(np.ones((3, 3)), requires_grad=True)
        out = T.dropout(x, 0.5, np.random.default_rng(0), training=False)
        assert out is x

    def test_inverted_scaling_preserves_mean(self):
        rng = np.random.default_rng(123)
        x = T.Tensor(np.ones(200_00))
        out = T.dropout(x, 0.3, rng, training=True)
        kept = out.data[out.data > 0]
        np.testing.assert_allclose(kept, 1.0 / 0.7, atol=1e-12)
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_seeded_masks_are_reproducible(self):
        x = T.Tensor(np.ones((4, 4)))
        a = T.dropout(x, 0.5, np.random.default_rng(5), training=True).data
        b = T.dropout(x, 0.5, np.random.default_rng(5), training=True).data
        np.testing.assert_array_equal(a, b)


class TestDeterminism:
    def test_same_seed_bitwise_identical_forward(self):
        def run():
            rng = np.random.default_rng(77)
            x = T.Tensor(rng.normal(size=(6, 8)))
            w = T.Tensor(rng.normal(size=(8, 4)))
            return T.softmax_rows(T.gelu(T.matmul(x, w))).data

        np.testing.assert_array_equal(run(), run())


class TestPrimitiveGradients:
    """Every primitive passes the central-difference oracle (several seeds)."""

    @pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
    def test_primitive(self, name):
        for seed in range(5):
            f, x = PRIMITIVE_CASES[name](seed)
            err = finite_difference_check(f, x, h=1e-5)
            assert err <= 1e-6, f"{name} seed {seed}: rel error {err}"
