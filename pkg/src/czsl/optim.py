"""Adam with decoupled weight decay and an epoch-level step-decay schedule."""

import numpy as np

from .tensor import ContractError


class Adam:
    """Adam (bias-corrected) over a list of Parameters.

    Frozen parameters are skipped entirely, so their data is bit-identical
    across any number of steps. Weight decay is decoupled (applied to the
    data directly, scaled by the current learning rate). After a
    successful step every updated parameter's gradient is reset to zeros.

    The step-decay schedule multiplies the learning rate by
    ``step_factor`` every ``step_period`` epochs; call ``advance_epoch()``
    once per epoch.
    """

    def __init__(
        self,
        params,
        lr=1e-4,
        betas=(0.9, 0.999),
        eps=1e-8,
        weight_decay=0.0,
        step_period=5,
        step_factor=0.5,
    ):
        self.params = list(params)
        self.base_lr = float(lr)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_period = int(step_period) if step_period else 0
        self.step_factor = float(step_factor)
        self.t = 0
        self.epoch = 0
        self._m = {id(p): np.zeros_like(p.data) for p in self.params if not p.frozen}
        self._v = {id(p): np.zeros_like(p.data) for p in self.params if not p.frozen}

    def step(self):
        """Apply one Adam update to every non-frozen parameter."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p in self.params:
            if p.frozen:
                continue
            if p.grad is None:
                raise ContractError(f"parameter {p.name!r} has no gradient")
            g = p.grad
            m = self._m[id(p)]
            v = self._v[id(p)]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def advance_epoch(self):
        """Advance the step-decay schedule by one epoch."""
        self.epoch += 1
        if self.step_period:
            self.lr = self.base_lr * self.step_factor ** (self.epoch // self.step_period)
