"""Shared builders for the gradient-check suites.

Each entry of PRIMITIVE_CASES maps an op name to a factory that, given a
seed, returns `(f, x)` with `f` a deterministic scalar function of the
tensor `x`. The same table drives both the unit tests and the acceptance
gradient suite.
"""

import numpy as np

from czsl import tensor as T


def _rng(seed):
    return np.random.default_rng(seed)


def _weighted_sum(y, seed):
    # contract the output against fixed random weights so f is scalar
    w = _rng(seed + 991).normal(size=y.data.shape)
    return T.tsum(T.mul(y, w))


def case_add(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    b = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.add(t, b), seed), x


def case_sub(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    b = T.Tensor(r.normal(size=(4,)), requires_grad=True)
    return lambda t: _weighted_sum(T.sub(b, t), seed), x


def case_mul(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(2, 5)), requires_grad=True)
    b = T.Tensor(r.normal(size=(2, 5)), requires_grad=True)
    return lambda t: _weighted_sum(T.mul(t, b), seed), x


def case_div(seed):
    r = _rng(seed)
    x = T.Tensor(r.uniform(0.5, 2.0, size=(3, 3)), requires_grad=True)
    b = T.Tensor(r.uniform(0.5, 2.0, size=(3, 3)), requires_grad=True)
    return lambda t: _weighted_sum(T.div(b, t), seed), x


def case_power(seed):
    r = _rng(seed)
    x = T.Tensor(r.uniform(0.5, 2.0, size=(6,)), requires_grad=True)
    return lambda t: _weighted_sum(T.power(t, -0.5), seed), x


def case_matmul_left(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    b = T.Tensor(r.normal(size=(4, 2)), requires_grad=True)
    return lambda t: _weighted_sum(T.matmul(t, b), seed), x


def case_matmul_right(seed):
    r = _rng(seed)
    a = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    x = T.Tensor(r.normal(size=(4, 2)), requires_grad=True)
    return lambda t: _weighted_sum(T.matmul(a, t), seed), x


def case_matmul_batched(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(2, 3, 4)), requires_grad=True)
    b = T.Tensor(r.normal(size=(2, 4, 2)), requires_grad=True)
    return lambda t: _weighted_sum(T.matmul(t, b), seed), x


def case_matmul_broadcast_weight(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(4, 3)), requires_grad=True)
    a = T.Tensor(r.normal(size=(2, 5, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.matmul(a, t), seed), x


def case_reshape_swap(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(2, 3, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.swapaxes(T.reshape(t, (2, 4, 3)), 0, 2), seed), x


def case_broadcast_to(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(1, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.broadcast_to(t, (3, 5, 4)), seed), x


def case_concat(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(2, 3)), requires_grad=True)
    b = T.Tensor(r.normal(size=(4, 3)), requires_grad=True)
    return lambda t: _weighted_sum(T.concat([t, b], axis=0), seed), x


def case_narrow(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(4, 5, 3)), requires_grad=True)
    return lambda t: _weighted_sum(t[:, 1, :], seed), x


def case_take_rows(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(5, 3)), requires_grad=True)
    idx = np.array([0, 2, 2, 4])
    return lambda t: _weighted_sum(T.take_rows(t, idx), seed), x


def case_take_pairs(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(4, 6)), requires_grad=True)
    rows = np.array([0, 1, 2, 3, 1])
    cols = np.array([5, 0, 3, 2, 0])
    return lambda t: _weighted_sum(T.take_pairs(t, rows, cols), seed), x


def case_sum_axis(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4, 2)), requires_grad=True)
    return lambda t: _weighted_sum(T.tsum(t, axis=1), seed), x


def case_mean_axis(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.tmean(t, axis=-1, keepdims=True), seed), x


def case_exp(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(7,)), requires_grad=True)
    return lambda t: _weighted_sum(T.texp(t), seed), x


def case_log(seed):
    r = _rng(seed)
    x = T.Tensor(r.uniform(0.2, 3.0, size=(7,)), requires_grad=True)
    return lambda t: _weighted_sum(T.tlog(t), seed), x


def case_sigmoid(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.sigmoid(t), seed), x


def case_gelu(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 4)), requires_grad=True)
    return lambda t: _weighted_sum(T.gelu(t), seed), x


def case_softmax_rows(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 5)), requires_grad=True)
    return lambda t: _weighted_sum(T.softmax_rows(t), seed), x


def case_layer_norm(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 6)), requires_grad=True)
    gamma = T.Tensor(r.normal(size=(6,)), requires_grad=True)
    beta = T.Tensor(r.normal(size=(6,)), requires_grad=True)
    return lambda t: _weighted_sum(T.layer_norm(t, gamma, beta), seed), x


def case_layer_norm_gamma(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 6)), requires_grad=True)
    gamma = T.Tensor(r.normal(size=(6,)), requires_grad=True)
    beta = T.Tensor(r.normal(size=(6,)), requires_grad=True)
    return lambda g: _weighted_sum(T.layer_norm(x, g, beta), seed), gamma


def case_l2_normalize(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(3, 6)), requires_grad=True)
    return lambda t: _weighted_sum(T.l2_normalize(t), seed), x


def case_clamp_min(seed):
    r = _rng(seed)
    # keep values away from the clamp boundary so the subgradient is clean
    vals = r.uniform(0.3, 2.0, size=(8,))
    vals[:3] = -r.uniform(0.3, 1.0, size=3)
    x = T.Tensor(vals, requires_grad=True)
    return lambda t: _weighted_sum(T.clamp_min(t, 0.1), seed), x


def case_cross_entropy(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(4, 6)), requires_grad=True)
    labels = r.integers(0, 6, size=4)
    return lambda t: T.cross_entropy(T.softmax_rows(t), labels), x


def case_dropout(seed):
    r = _rng(seed)
    x = T.Tensor(r.normal(size=(5, 4)), requires_grad=True)

    def f(t):
        # reseeding inside f keeps the mask (and hence f) deterministic
        return _weighted_sum(T.dropout(t, 0.4, np.random.default_rng(seed + 17)), seed)

    return f, x


PRIMITIVE_CASES = {
    "add": case_add,
    "sub": case_sub,
    "mul": case_mul,
    "div": case_div,
    "power": case_power,
    "matmul_left": case_matmul_left,
    "matmul_right": case_matmul_right,
    "matmul_batched": case_matmul_batched,
    "matmul_broadcast_weight": case_matmul_broadcast_weight,
    "reshape_swap": case_reshape_swap,
    "broadcast_to": case_broadcast_to,
    "concat": case_concat,
    "narrow": case_narrow,
    "take_rows": case_take_rows,
    "take_pairs": case_take_pairs,
    "sum_axis": case_sum_axis,
    "mean_axis": case_mean_axis,
    "exp": case_exp,
    "log": case_log,
    "sigmoid": case_sigmoid,
    "gelu": case_gelu,
    "softmax_rows": case_softmax_rows,
    "layer_norm": case_layer_norm,
    "layer_norm_gamma": case_layer_norm_gamma,
    "l2_normalize": case_l2_normalize,
    "clamp_min": case_clamp_min,
    "cross_entropy": case_cross_entropy,
    "dropout": case_dropout,
}
