"""Central-difference gradient verification.

This is the independent oracle for the reverse-mode engine: it never
touches the tape except to read the analytic gradient, and the numeric
side re-evaluates the function with tracking disabled.
"""

import numpy as np

from .tensor import ContractError, no_grad


def finite_difference_check(f, x, h=1e-5):
    """Max relative error between backward() and central differences.

    `f` must be a deterministic scalar-valued function of `x`; determinism
    is verified by evaluating twice and comparing bitwise. The returned
    error is ``max |analytic - numeric| / max(1, |numeric|)`` over the
    elements of `x`.
    """
    if h <= 0:
        raise ContractError(f"step size must be positive, got {h}")
    with no_grad():
        y0 = f(x).data
        y1 = f(x).data
    if not np.array_equal(y0, y1):
        raise ContractError("f is not deterministic: repeated evaluation differs")
    if y0.size != 1:
        raise ContractError(f"f must be scalar-valued, got shape {y0.shape}")

    x.grad = None
    y = f(x)
    y.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    numeric = np.zeros_like(x.data)
    with no_grad():
        for idx in np.ndindex(*x.data.shape):
            orig = x.data[idx]
            x.data[idx] = orig + h
            fp = float(f(x).data)
            x.data[idx] = orig - h
            fm = float(f(x).data)
            x.data[idx] = orig
            numeric[idx] = (fp - fm) / (2.0 * h)

    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(rel.max()) if rel.size else 0.0


def check_parameters(loss_fn, params, h=1e-5):
    """Run the central-difference check for each parameter of a model.

    `loss_fn` is a zero-argument callable returning the scalar loss;
    the analytic gradients come from a single backward pass. Returns
    ``{name: max relative error}``.
    """
    params = [p for p in params if not p.frozen]
    for p in params:
        p.grad = None
    with no_grad():
        y0 = loss_fn().data
        y1 = loss_fn().data
    if not np.array_equal(y0, y1):
        raise ContractError("loss_fn is not deterministic: repeated evaluation differs")
    loss = loss_fn()
    loss.backward()

    errors = {}
    with no_grad():
        for p in params:
            analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
            numeric = np.zeros_like(p.data)
            for idx in np.ndindex(*p.data.shape):
                orig = p.data[idx]
                p.data[idx] = orig + h
                fp = float(loss_fn().data)
                p.data[idx] = orig - h
                fm = float(loss_fn().data)
                p.data[idx] = orig
                numeric[idx] = (fp - fm) / (2.0 * h)
            rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
            errors[p.name or f"param_{id(p)}"] = float(rel.max()) if rel.size else 0.0
            p.grad = None
    return errors
