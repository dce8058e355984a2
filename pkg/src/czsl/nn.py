"""Layer toolkit: parameter registry, linear/layer-norm blocks, self-attention,
pre-norm transformer encoder blocks, and low-rank adapters.

Modules auto-register Parameters and child Modules assigned as attributes,
which gives checkpointing and the optimizer a stable, named view of every
weight in a model.
"""

import numpy as np

from .tensor import (
    Parameter,
    dropout,
    gelu,
    layer_norm,
    matmul,
    softmax_rows,
)


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class RngBox:
    """Shared mutable holder for the training-time dropout generator."""

    def __init__(self, generator=None):
        self.generator = generator


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for name, child in self._modules.items():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [p for p in self.parameters() if not p.frozen]

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing}, unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}"
                )
            p.data = arr.copy()


def assign_parameter_names(module, prefix=""):
    """Write the full registry path into each Parameter's `name`."""
    for path, p in module.named_parameters(prefix=prefix):
        p.name = path


def frozen_checksum(module):
    """SHA-256 over all frozen parameter bytes, in name order."""
    import hashlib

    digest = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        if p.frozen:
            digest.update(name.encode())
            digest.update(p.data.tobytes())
    return digest.hexdigest()


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        object.__setattr__(self, "_items", [])
        for m in modules:
            self.append(m)

    def append(self, module):
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, frozen=False, init_std=None):
        super().__init__()
        std = d_in**-0.5 if init_std is None else init_std
        self.weight = Parameter(rng.normal(0.0, std, (d_in, d_out)), frozen=frozen)
        if bias:
            self.bias = Parameter(np.zeros(d_out), frozen=frozen)
        else:
            self.bias = None

    def __call__(self, x):
        y = matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5, frozen=False):
        super().__init__()
        self.gamma = Parameter(np.ones(d), frozen=frozen)
        self.beta = Parameter(np.zeros(d), frozen=frozen)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, eps=self.eps)


class LoRAAdapter(Module):
    """Additive low-rank delta for a frozen linear map.

    The up-projection starts at zero, so a freshly constructed adapter is
    an exact no-op. Dropout acts on the adapter input only, in training
    mode only.
    """

    def __init__(self, d_in, d_out, rank, rng, drop_rate=0.0, scale=1.0, rng_box=None):
        super().__init__()
        if rank < 1:
            raise ConfigError(f"adapter rank must be >= 1, got {rank}")
        if rank > min(d_in, d_out):
            raise ConfigError(
                f"adapter rank {rank} exceeds weight dimension {min(d_in, d_out)}"
            )
        self.down = Parameter(rng.normal(0.0, 0.02, (d_in, rank)))
        self.up = Parameter(np.zeros((rank, d_out)))
        self.rank = rank
        self.drop_rate = drop_rate
        self.scale = scale
        self.rng_box = rng_box

    def __call__(self, x):
        h = x
        if self.drop_rate and self.training:
            h = dropout(h, self.drop_rate, self.rng_box.generator, training=True)
        return matmul(matmul(h, self.down), self.up) * self.scale

    def delta(self):
        """The materialized weight delta scale * down @ up (numpy array)."""
        return self.scale * (self.down.data @ self.up.data)


def split_heads(x, heads):
    """(B, T, D) -> (B, heads, T, D/heads)."""
    b, t, d = x.shape
    return x.reshape((b, t, heads, d // heads)).swapaxes(1, 2)


def merge_heads(x):
    """(B, heads, T, dk) -> (B, T, heads*dk)."""
    b, h, t, dk = x.shape
    return x.swapaxes(1, 2).reshape((b, t, h * dk))


def scaled_dot_attention(q, k, v):
    """Per-head softmax(q k^T / sqrt(dk)) v; returns (values, weights)."""
    dk = q.shape[-1]
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dk))
    weights = softmax_rows(scores)
    return matmul(weights, v), weights


class SelfAttention(Module):
    """Multi-head self-attention with optional low-rank adapters on Q and V."""

    def __init__(
        self,
        d,
        heads,
        rng,
        frozen=False,
        lora_rank=None,
        lora_dropout=0.0,
        lora_scale=1.0,
        rng_box=None,
    ):
        super().__init__()
        if d % heads != 0:
            raise ConfigError(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.w_q = Linear(d, d, rng, frozen=frozen)
        self.w_k = Linear(d, d, rng, frozen=frozen)
        self.w_v = Linear(d, d, rng, frozen=frozen)
        self.w_o = Linear(d, d, rng, frozen=frozen)
        if lora_rank:
            self.lora_q = LoRAAdapter(d, d, lora_rank, rng, lora_dropout, lora_scale, rng_box)
            self.lora_v = LoRAAdapter(d, d, lora_rank, rng, lora_dropout, lora_scale, rng_box)
        else:
            self.lora_q = None
            self.lora_v = None

    def __call__(self, x):
        q = self.w_q(x)
        v = self.w_v(x)
        if self.lora_q is not None:
            q = q + self.lora_q(x)
            v = v + self.lora_v(x)
        k = self.w_k(x)
        out, _ = scaled_dot_attention(
            split_heads(q, self.heads), split_heads(k, self.heads), split_heads(v, self.heads)
        )
        return self.w_o(merge_heads(out))


class TransformerBlock(Module):
    """Pre-norm encoder block: x + attn(ln(x)), then x + ffn(ln(x))."""

    def __init__(
        self,
        d,
        heads,
        rng,
        ffn_mult=4,
        frozen=False,
        lora_rank=None,
        lora_dropout=0.0,
        lora_scale=1.0,
        rng_box=None,
    ):
        super().__init__()
        self.ln1 = LayerNorm(d, frozen=frozen)
        self.attn = SelfAttention(
            d,
            heads,
            rng,
            frozen=frozen,
            lora_rank=lora_rank,
            lora_dropout=lora_dropout,
            lora_scale=lora_scale,
            rng_box=rng_box,
        )
        self.ln2 = LayerNorm(d, frozen=frozen)
        self.fc1 = Linear(d, ffn_mult * d, rng, frozen=frozen)
        self.fc2 = Linear(ffn_mult * d, d, rng, frozen=frozen)

    def __call__(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.fc2(gelu(self.fc1(self.ln2(x))))
