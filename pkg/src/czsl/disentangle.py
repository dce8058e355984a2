"""Branch-space modelling: three independent transformer encoders map the
refined latent units into attribute, object and composition spaces, each
followed by mean pooling over the latent tokens and a projection to the
text dimension.

The branches share no parameters, so gradients from one branch's loss
never touch another branch's weights. Latent tokens are an unordered
set: no positional encodings are added, and the pool-project path is
permutation invariant by itself.
"""

from dataclasses import dataclass

from .nn import LayerNorm, Module, ModuleList, TransformerBlock, Linear
from .tensor import Tensor, tmean

BRANCHES = ("a", "o", "c")


@dataclass
class BranchRepresentations:
    """Per-image representation vectors; disabled branches carry None."""

    f_a: Tensor | None
    f_o: Tensor | None
    f_c: Tensor | None
    f_g: Tensor | None

    def get(self, branch):
        return getattr(self, f"f_{branch}")


class BranchEncoder(Module):
    """Pre-norm self-attention blocks over the latent tokens, final norm."""

    def __init__(self, d, heads, depth, rng):
        super().__init__()
        self.blocks = ModuleList(TransformerBlock(d, heads, rng) for _ in range(depth))
        self.final_norm = LayerNorm(d)

    def __call__(self, x):
        for block in self.blocks:
            x = block(x)
        return self.final_norm(x)


def mean_pool(latents):
    """Column-wise mean over the latent tokens: (..., K, d) -> (..., d)."""
    return tmean(latents, axis=-2)


def pool_project(latents, projection):
    """Mean-pool the latent tokens, then project to the text dimension."""
    latents, squeezed = (latents.reshape((1,) + latents.shape), True) if latents.ndim == 2 else (latents, False)
    out = projection(mean_pool(latents))
    return out[0] if squeezed else out


class SpaceModeler(Module):
    def __init__(self, d_v, d_t, heads, depths, rng):
        super().__init__()
        depths = tuple(depths)
        if len(depths) != 3:
            raise ValueError(f"expected one depth per branch (a, o, c), got {depths!r}")
        self.attr_encoder = BranchEncoder(d_v, heads, depths[0], rng)
        self.obj_encoder = BranchEncoder(d_v, heads, depths[1], rng)
        self.comp_encoder = BranchEncoder(d_v, heads, depths[2], rng)
        self.attr_proj = Linear(d_v, d_t, rng)
        self.obj_proj = Linear(d_v, d_t, rng)
        self.comp_proj = Linear(d_v, d_t, rng)

    def _branch(self, name):
        return {
            "a": (self.attr_encoder, self.attr_proj),
            "o": (self.obj_encoder, self.obj_proj),
            "c": (self.comp_encoder, self.comp_proj),
        }[name]

    def disentangle(self, latents, branches=BRANCHES):
        """Run each requested branch encoder; returns {branch: (B, K, d_v)}."""
        out = {}
        for name in branches:
            encoder, _ = self._branch(name)
            out[name] = encoder(latents)
        return out

    def branch_vectors(self, latents, branches=BRANCHES):
        """Full branch path: encode, mean-pool, project; {branch: (B, d_t)}."""
        spaces = self.disentangle(latents, branches)
        return {
            name: pool_project(spaces[name], self._branch(name)[1]) for name in branches
        }
