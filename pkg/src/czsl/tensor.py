"""Dense tensors with tape-based reverse-mode automatic differentiation.

Every layer, attention block and loss in this package is built from the
whole-tensor primitives defined here. Forward values are plain numpy
arrays; tracked operations record a backward closure so that a single
`backward()` call on a scalar loss accumulates gradients into every
reachable leaf with ``requires_grad``. The finite-difference checker in
`czsl.gradcheck` is the independent oracle that keeps the closures honest.

Float64 is the default (verification mode); `set_default_dtype` switches
to float32 for fast runs.
"""

import itertools
import logging

import numpy as np
from scipy.special import erf as _erf

logger = logging.getLogger(__name__)

CE_PROB_FLOOR = 1e-12

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ContractError(ValueError):
    """An input or state contract was violated."""


_DTYPE = np.float64


def set_default_dtype(dtype):
    """Select float64 (verification mode) or float32 (fast mode)."""
    global _DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ContractError(f"unsupported dtype {dt}; use float64 or float32")
    _DTYPE = dt.type


def default_dtype():
    return _DTYPE


_grad_enabled = True


class no_grad:
    """Context manager that disables tape construction (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


_ids = itertools.count()


class Tensor:
    """A dense nd-array plus the bookkeeping needed for reverse mode.

    Tensors produced by tracked operations keep references to their
    parents and a vector-Jacobian-product closure; leaves created
    directly from data have neither. ``backward()`` walks the tape in
    reverse topological order and accumulates into ``.grad`` on leaves
    with ``requires_grad=True``; calling it twice without resetting
    accumulates further.
    """

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise ContractError("tensor data must be finite (found NaN/Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None
        self.op = "leaf"
        self._id = next(_ids)

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def item(self):
        return float(self.data)

    def numpy(self):
        """The underlying array (a view; do not mutate)."""
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def broadcast_to(self, shape):
        return broadcast_to(self, shape)

    # -- reverse mode --------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into all tracked leaves."""
        if self.data.size != 1:
            raise ContractError(
                f"backward requires a scalar, got shape {self.data.shape}"
            )
        topo = _toposort(self)
        grads = {self._id: np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(node._id, None)
            if g is None:
                continue
            if node._vjp is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._id in grads:
                    grads[parent._id] = grads[parent._id] + pg
                else:
                    grads[parent._id] = pg


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node._id in visited:
            continue
        visited.add(node._id)
        stack.append((node, True))
        for p in node._parents:
            if p._id not in visited and p.requires_grad:
                stack.append((p, False))
    return order


class Parameter(Tensor):
    """A named leaf tensor. Frozen parameters take no gradients or updates.

    Frozen parameters are created with ``requires_grad=False`` so no tape
    is built through paths that touch only constants; this is what makes
    the frozen-weight contracts (zero gradient, bit-identical data across
    a training run) hold by construction.
    """

    def __init__(self, data, name="", frozen=False):
        super().__init__(data, requires_grad=not frozen)
        self.name = name
        self.frozen = frozen

    def __repr__(self):
        tag = ", frozen" if self.frozen else ""
        return f"Parameter({self.name!r}, shape={self.data.shape}{tag})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, vjp, op):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._id = next(_ids)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g, shape):
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _const(x):
    return np.asarray(x, dtype=_DTYPE)


# -- arithmetic ---------------------------------------------------------------


def add(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        out = a.data + b.data

        def vjp(g):
            return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

        return _result(out, (a, b), vjp, "add")
    if isinstance(a, Tensor):
        c = _const(b)
        return _result(a.data + c, (a,), lambda g: (_unbroadcast(g, a.data.shape),), "add")
    c = _const(a)
    return _result(c + b.data, (b,), lambda g: (_unbroadcast(g, b.data.shape),), "add")


def sub(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        out = a.data - b.data

        def vjp(g):
            return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

        return _result(out, (a, b), vjp, "sub")
    if isinstance(a, Tensor):
        c = _const(b)
        return _result(a.data - c, (a,), lambda g: (_unbroadcast(g, a.data.shape),), "sub")
    c = _const(a)
    return _result(c - b.data, (b,), lambda g: (_unbroadcast(-g, b.data.shape),), "sub")


def mul(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        out = a.data * b.data

        def vjp(g):
            return (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            )

        return _result(out, (a, b), vjp, "mul")
    if isinstance(a, Tensor):
        c = _const(b)
        return _result(a.data * c, (a,), lambda g: (_unbroadcast(g * c, a.data.shape),), "mul")
    return mul(b, a)


def div(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        out = a.data / b.data

        def vjp(g):
            return (
                _unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
            )

        return _result(out, (a, b), vjp, "div")
    if isinstance(a, Tensor):
        return mul(a, 1.0 / _const(b))
    c = _const(a)
    out = c / b.data

    def vjp(g):
        return (_unbroadcast(-g * c / (b.data * b.data), b.data.shape),)

    return _result(out, (b,), vjp, "div")


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent):
    """Elementwise a**c for a scalar exponent."""
    c = float(exponent)
    out = a.data**c

    def vjp(g):
        return (g * c * a.data ** (c - 1.0),)

    return _result(out, (a,), vjp, "power")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(
            f"matmul needs matrices, got shapes {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data
    need_a = a.requires_grad
    need_b = b.requires_grad

    def vjp(g):
        ga = gb = None
        if need_a:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        if need_b:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _result(out, (a, b), vjp, "matmul")


# -- shape manipulation -------------------------------------------------------


def reshape(a, shape):
    out = a.data.reshape(shape)
    return _result(out, (a,), lambda g: (g.reshape(a.data.shape),), "reshape")


def swapaxes(a, ax1, ax2):
    out = np.swapaxes(a.data, ax1, ax2)
    return _result(out, (a,), lambda g: (np.swapaxes(g, ax1, ax2),), "swapaxes")


def broadcast_to(a, shape):
    out = np.broadcast_to(a.data, shape)
    return _result(out, (a,), lambda g: (_unbroadcast(g, a.data.shape),), "broadcast_to")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, sizes, axis=axis))

    return _result(out, tuple(tensors), vjp, "concat")


def narrow(a, key):
    """Basic slicing (ints/slices); gradient scatters back into place."""
    out = a.data[key]

    def vjp(g):
        buf = np.zeros_like(a.data)
        buf[key] += g
        return (buf,)

    return _result(out, (a,), vjp, "narrow")


def take_rows(a, indices):
    """Row gather along axis 0 (embedding lookup); duplicates accumulate."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < -a.data.shape[0] or idx.max() >= a.data.shape[0]):
        raise IndexError(
            f"row index out of range for {a.data.shape[0]} rows: {indices!r}"
        )
    out = a.data[idx]

    def vjp(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _result(out, (a,), vjp, "take_rows")


def take_pairs(a, rows, cols):
    """Gather a[rows[i], cols[i]] for each i (label-probability pick)."""
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    out = a.data[r, c]

    def vjp(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, (r, c), g)
        return (buf,)

    return _result(out, (a,), vjp, "take_pairs")


# -- reductions ---------------------------------------------------------------


def _spread(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        return (np.ascontiguousarray(_spread(g, a.data.shape, axis, keepdims)),)

    return _result(out, (a,), vjp, "sum")


def tmean(a, axis=None, keepdims=False):
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        count = a.data.shape[axis]

    def vjp(g):
        return (np.ascontiguousarray(_spread(g / count, a.data.shape, axis, keepdims)),)

    return _result(out, (a,), vjp, "mean")


# -- pointwise nonlinearities ---------------------------------------------------


def texp(a):
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def tlog(a):
    out = np.log(a.data)
    return _result(out, (a,), lambda g: (g / a.data,), "log")


def sigmoid(a):
    """Elementwise 1/(1+e^-x), computed stably on both tails."""
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), vjp, "sigmoid")


def gelu(a):
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out = x * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _result(out, (a,), vjp, "gelu")


def clamp_min(a, floor):
    out = np.maximum(a.data, floor)
    keep = a.data >= floor

    def vjp(g):
        return (g * keep,)

    return _result(out, (a,), vjp, "clamp_min")


def dropout(a, rate, rng, training=True):
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(a.data.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return mul(a, mask)


# -- composite building blocks --------------------------------------------------


def softmax_rows(a):
    """Row-wise softmax over the last axis with max-subtraction."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _result(out, (a,), vjp, "softmax_rows")


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shape mismatch: x last dim {d}, "
            f"gamma {gamma.data.shape}, beta {beta.data.shape}"
        )
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gamma), beta)


def l2_normalize(x, eps=1e-12):
    """Scale rows (last axis) to unit Euclidean norm."""
    ss = tsum(mul(x, x), axis=-1, keepdims=True)
    return mul(x, power(add(ss, eps), -0.5))


def cross_entropy(probs, labels, stats=None, sample_weights=None):
    """Mean negative log-probability of the labelled classes.

    `probs` rows must already be normalized (this is applied on softmax
    outputs). Probabilities below CE_PROB_FLOOR are clamped so the log
    stays defined; clamping is counted into `stats["clamped"]` when a
    stats dict is supplied, and logged otherwise. `sample_weights`
    optionally scales each sample's term (the mean keeps the full batch
    size as denominator).
    """
    if probs.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects a batch matrix, got {probs.data.shape}")
    n, k = probs.data.shape
    lab = np.asarray(labels, dtype=np.intp)
    if lab.ndim != 1 or lab.shape[0] != n:
        raise ShapeError(f"labels must be a length-{n} vector, got shape {lab.shape}")
    if lab.size and (lab.min() < 0 or lab.max() >= k):
        bad = lab[(lab < 0) | (lab >= k)][0]
        raise IndexError(f"label {bad} out of range for {k} classes")
    picked = take_pairs(probs, np.arange(n), lab)
    n_clamped = int((picked.data < CE_PROB_FLOOR).sum())
    if n_clamped:
        if stats is not None:
            stats["clamped"] = stats.get("clamped", 0) + n_clamped
        else:
            logger.warning("cross_entropy clamped %d probabilities at %g", n_clamped, CE_PROB_FLOOR)
    logp = tlog(clamp_min(picked, CE_PROB_FLOOR))
    if sample_weights is not None:
        w = np.asarray(sample_weights, dtype=probs.data.dtype)
        if w.shape != (n,):
            raise ShapeError(f"sample_weights must have shape ({n},), got {w.shape}")
        logp = mul(logp, w)
    return neg(tmean(logp))


def find_first_nonfinite(root):
    """Earliest-created tensor with non-finite data reachable from `root`.

    Used for the training-abort diagnostic; returns None when everything
    is finite.
    """
    best = None
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if node._id in seen:
            continue
        seen.add(node._id)
        if not np.all(np.isfinite(node.data)):
            if best is None or node._id < best._id:
                best = node
        stack.extend(node._parents)
    return best
