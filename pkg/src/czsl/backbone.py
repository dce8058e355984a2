"""Deterministic stub encoders standing in for a pretrained vision-language
backbone, plus the embedding tables and soft prompts of the text side.

The image encoder is a small ViT-style stack with seeded frozen weights:
a patch projection, a class token, positional embeddings, `lower_layers`
frozen blocks and `upper_layers` blocks whose query/value projections
carry trainable low-rank adapters. It exposes one hidden state per upper
layer (plus the state feeding them) so that downstream cross-attention
can read the upper stack, and a frozen linear head that turns the final
class token into the global image representation.

The text encoder is a frozen 1-2 block transformer over soft prompt
sequences; only the prompt inputs (prefix vectors and attribute/object
embedding rows) are trainable, so gradients flow to them and never to
the encoder itself.
"""

from dataclasses import dataclass

import numpy as np

from .nn import ConfigError, Linear, Module, ModuleList, TransformerBlock
from .tensor import (
    ContractError,
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    matmul,
    reshape,
    take_rows,
)


class StubImageEncoder(Module):
    def __init__(
        self,
        grid_patches,
        patch_dim,
        d_v,
        d_t,
        lower_layers,
        upper_layers,
        heads,
        rng,
        lora_rank=None,
        lora_dropout=0.0,
        lora_scale=1.0,
        rng_box=None,
    ):
        super().__init__()
        if upper_layers < 1:
            raise ConfigError("image encoder needs at least one adapted upper layer")
        self.grid_patches = grid_patches
        self.patch_dim = patch_dim
        self.tokens = grid_patches + 1  # class token first
        self.patch_proj = Linear(patch_dim, d_v, rng, frozen=True)
        self.cls_token = Parameter(rng.normal(0.0, 0.02, (1, d_v)), frozen=True)
        self.pos_embed = Parameter(rng.normal(0.0, 0.02, (self.tokens, d_v)), frozen=True)
        self.lower = ModuleList(
            TransformerBlock(d_v, heads, rng, frozen=True) for _ in range(lower_layers)
        )
        self.upper = ModuleList(
            TransformerBlock(
                d_v,
                heads,
                rng,
                frozen=True,
                lora_rank=lora_rank,
                lora_dropout=lora_dropout,
                lora_scale=lora_scale,
                rng_box=rng_box,
            )
            for _ in range(upper_layers)
        )
        self.global_head = Linear(d_v, d_t, rng, bias=False, frozen=True)

    @property
    def refined_layers(self):
        return len(self.upper)

    def __call__(self, x):
        """Feature grid (B, grid_patches, patch_dim) -> (hidden states, global vector).

        Returns a list of ``upper_layers + 1`` states of shape (B, tokens, d_v)
        — the output of the lower stack followed by each upper layer — and
        the class-token projection of the final state, shape (B, d_t).
        """
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1] != self.grid_patches or x.shape[2] != self.patch_dim:
            raise ShapeError(
                f"expected image batch of shape (B, {self.grid_patches}, "
                f"{self.patch_dim}), got {x.shape}"
            )
        batch = x.shape[0]
        tok = self.patch_proj(x)
        cls = broadcast_to(reshape(self.cls_token, (1, 1, -1)), (batch, 1, tok.shape[-1]))
        tok = concat([cls, tok], axis=1) + self.pos_embed
        for block in self.lower:
            tok = block(tok)
        hidden = [tok]
        for block in self.upper:
            tok = block(tok)
            hidden.append(tok)
        f_g = self.global_head(tok[:, 0, :])
        return hidden, f_g


class StubTextEncoder(Module):
    """Frozen transformer over prompt token sequences, pooled at the last token."""

    def __init__(self, d_t, layers, heads, rng):
        super().__init__()
        if not 1 <= layers <= 2:
            raise ConfigError(f"text stub depth must be 1 or 2, got {layers}")
        self.blocks = ModuleList(
            TransformerBlock(d_t, heads, rng, frozen=True) for _ in range(layers)
        )

    def __call__(self, tokens):
        tokens = as_tensor(tokens)
        if tokens.ndim != 3:
            raise ShapeError(f"expected (batch, tokens, d_t), got {tokens.shape}")
        if tokens.shape[1] == 0:
            raise ContractError("cannot encode an empty token sequence")
        for block in self.blocks:
            tokens = block(tokens)
        return tokens[:, -1, :]


class EmbeddingTables(Module):
    """Trainable attribute/object embedding rows plus the prompt prefix.

    The prefix plays the role of a tokenized carrier phrase; with no real
    vocabulary it is simply a seeded trainable matrix.
    """

    def __init__(self, n_attributes, n_objects, d_t, prefix_len, rng):
        super().__init__()
        self.n_attributes = n_attributes
        self.n_objects = n_objects
        self.prefix_len = prefix_len
        self.attr_embed = Parameter(rng.normal(0.0, 0.02, (n_attributes, d_t)))
        self.obj_embed = Parameter(rng.normal(0.0, 0.02, (n_objects, d_t)))
        self.prefix = Parameter(rng.normal(0.0, 0.02, (prefix_len, d_t)))

    def _prefix_for(self, count):
        r, d = self.prefix.shape
        return broadcast_to(reshape(self.prefix, (1, r, d)), (count, r, d))

    def attribute_prompts(self, indices=None):
        """Token sequences [prefix..., e_a], shape (n, prefix_len + 1, d_t)."""
        if indices is None:
            indices = np.arange(self.n_attributes)
        rows = take_rows(self.attr_embed, indices)
        count, d = rows.shape
        return concat([self._prefix_for(count), reshape(rows, (count, 1, d))], axis=1)

    def object_prompts(self, indices=None):
        if indices is None:
            indices = np.arange(self.n_objects)
        rows = take_rows(self.obj_embed, indices)
        count, d = rows.shape
        return concat([self._prefix_for(count), reshape(rows, (count, 1, d))], axis=1)

    def composition_prompts(self, pairs):
        """Token sequences [prefix..., e_a, e_o] for candidate (attr, obj) pairs."""
        pairs = np.asarray(pairs, dtype=np.intp)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ShapeError(f"pairs must be (C, 2) index pairs, got {pairs.shape}")
        if pairs.size and (pairs[:, 0].min() < 0 or pairs[:, 0].max() >= self.n_attributes):
            raise IndexError(
                f"attribute id out of range for {self.n_attributes} attributes"
            )
        if pairs.size and (pairs[:, 1].min() < 0 or pairs[:, 1].max() >= self.n_objects):
            raise IndexError(f"object id out of range for {self.n_objects} objects")
        ea = take_rows(self.attr_embed, pairs[:, 0])
        eo = take_rows(self.obj_embed, pairs[:, 1])
        count, d = ea.shape
        return concat(
            [
                self._prefix_for(count),
                reshape(ea, (count, 1, d)),
                reshape(eo, (count, 1, d)),
            ],
            axis=1,
        )


@dataclass
class PromptBank:
    """Encoded prompt representations for one candidate set.

    Branches that are disabled in the current configuration carry None.
    """

    t_a: Tensor | None
    t_o: Tensor | None
    t_c: Tensor | None
    pairs: np.ndarray


def lora_apply(x, weight, adapter):
    """x @ (W + scale * down @ up), with dropout on the adapter path only."""
    return matmul(x, weight) + adapter(x)
