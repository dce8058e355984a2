"""Gated cross-attention: a set of latent units iteratively refined against
the upper hidden states of the image encoder.

One refinement step per hidden state, all steps sharing a single weight
set (recurrently, like an RNN cell applied along depth):

1. project latents to queries and the hidden state to keys/values, run
   multi-head scaled dot-product attention;
2. modulate the attention output elementwise with
   ``sigmoid((q Wz) * (q1 Uz))`` — the gate that suppresses irrelevant
   content (can be disabled, which turns the step into plain
   cross-attention for the ablation);
3. apply the output projection and a residual MLP over a layer norm.

There is deliberately no residual or pre-norm around the attention
sub-step itself; only the MLP is residual.
"""

from .nn import ConfigError, LayerNorm, Linear, Module, merge_heads, scaled_dot_attention, split_heads
from .tensor import Parameter, matmul, mul, sigmoid, gelu


def _lift(x):
    # accept a single (K, d) matrix anywhere a (B, K, d) batch is expected
    if x.ndim == 2:
        return x.reshape((1,) + x.shape), True
    return x, False


class GatedCrossAttention(Module):
    def __init__(self, d_v, heads, rng, gate_enabled=True, ffn_mult=4):
        super().__init__()
        if d_v % heads != 0:
            raise ConfigError(f"width {d_v} not divisible by {heads} heads")
        std = d_v**-0.5
        self.w_q = Parameter(rng.normal(0.0, std, (d_v, d_v)))
        self.w_k = Parameter(rng.normal(0.0, std, (d_v, d_v)))
        self.w_v = Parameter(rng.normal(0.0, std, (d_v, d_v)))
        self.w_z = Parameter(rng.normal(0.0, std, (d_v, d_v)))
        self.u_z = Parameter(rng.normal(0.0, std, (d_v, d_v)))
        self.w_o = Parameter(rng.normal(0.0, std, (d_v, d_v)))
        self.norm = LayerNorm(d_v)
        self.fc1 = Linear(d_v, ffn_mult * d_v, rng)
        self.fc2 = Linear(ffn_mult * d_v, d_v, rng)
        self.heads = heads
        self.gate_enabled = gate_enabled

    def cross_attention(self, latents, hidden):
        """Multi-head attention of latents over one hidden state.

        Returns (q, q1, weights): the projected queries, the attended
        values merged back to full width, and the per-head attention
        weights.
        """
        latents, squeeze = _lift(latents)
        hidden, _ = _lift(hidden)
        q = matmul(latents, self.w_q)
        k = matmul(hidden, self.w_k)
        v = matmul(hidden, self.w_v)
        ctx, weights = scaled_dot_attention(
            split_heads(q, self.heads), split_heads(k, self.heads), split_heads(v, self.heads)
        )
        q1 = merge_heads(ctx)
        if squeeze:
            q, q1, weights = q[0], q1[0], weights[0]
        return q, q1, weights

    def gate(self, q, q1):
        """q1 * sigmoid((q Wz) * (q1 Uz)); identity when the gate is disabled."""
        if not self.gate_enabled:
            return q1
        pre = mul(matmul(q, self.w_z), matmul(q1, self.u_z))
        return mul(q1, sigmoid(pre))

    def output_ffn(self, q2):
        """Output projection followed by a residual MLP over a layer norm."""
        out = matmul(q2, self.w_o)
        return out + self.fc2(gelu(self.fc1(self.norm(out))))

    def step(self, latents, hidden):
        q, q1, weights = self.cross_attention(latents, hidden)
        q2 = self.gate(q, q1)
        return self.output_ffn(q2), weights

    def __call__(self, latents, hidden_states, return_attention=False):
        """Refine latents against each hidden state in turn (shared weights)."""
        hidden_states = list(hidden_states)
        if not hidden_states:
            raise ConfigError(
                "gated cross-attention needs at least one hidden state (M >= 1)"
            )
        maps = []
        out = latents
        for hidden in hidden_states:
            out, weights = self.step(out, hidden)
            if return_attention:
                maps.append(weights)
        return (out, maps) if return_attention else out
