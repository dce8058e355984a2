"""The four-branch composition scorer.

Image side: stub encoder -> latent units refined by gated cross-attention
over the upper hidden states -> branch spaces -> attribute / object /
composition vectors, plus the encoder's own global vector. Text side:
soft prompts through the frozen text stub. Branch probabilities are
softmaxes over temperature-scaled cosine similarities; training minimizes
the weighted sum of the four branch cross-entropies, and inference fuses
the branch probabilities into one score per candidate pair:

    score = beta * p_global + (1 - beta) * p_composition + p_attr * p_obj
"""

import numpy as np

from .attention import GatedCrossAttention
from .backbone import EmbeddingTables, PromptBank, StubImageEncoder, StubTextEncoder
from .disentangle import BranchRepresentations, SpaceModeler
from .nn import ConfigError, Module, RngBox, assign_parameter_names
from .seeding import rng_for
from .tensor import (
    ContractError,
    Parameter,
    Tensor,
    as_tensor,
    broadcast_to,
    cross_entropy,
    l2_normalize,
    matmul,
    no_grad,
    reshape,
    softmax_rows,
    texp,
)


def branch_probabilities(f, prompts, tau):
    """Softmax over cosine similarities between f rows and prompt rows.

    Rows are L2-normalized here, the dot products divided by the
    temperature, and each row normalized over the candidate axis.
    """
    if prompts.shape[0] == 0:
        raise ContractError("empty candidate set")
    sims = matmul(l2_normalize(f), l2_normalize(prompts).T)
    return softmax_rows(sims / tau)


def total_loss(probs, labels, alphas, attr_mask=None, stats=None):
    """Weighted sum of per-branch cross-entropies.

    `probs` maps branch name ('a', 'o', 'c', 'g') to probability rows,
    `labels` to the matching label vector, and `alphas` to the loss
    weight. `attr_mask` optionally zeroes the attribute term for masked
    samples (attribute dropout). Returns (scalar tensor, per-branch
    float dict).
    """
    total = None
    branch_values = {}
    for name, p in probs.items():
        weights = attr_mask if (name == "a" and attr_mask is not None) else None
        branch = cross_entropy(p, labels[name], stats=stats, sample_weights=weights)
        branch_values[name] = float(branch.data)
        term = alphas[name] * branch
        total = term if total is None else total + term
    if total is None:
        raise ContractError("no branches enabled in loss")
    return total, branch_values


def fuse_scores(p_g, p_c, p_a, p_o, pairs, beta):
    """Combine branch probabilities into one score per candidate pair.

    Terms for disabled branches are passed as None and skipped; the
    primitive product needs both the attribute and object rows. Pure
    numpy; this is the inference path.
    """
    pairs = np.asarray(pairs, dtype=np.intp)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError(f"pairs must be (C, 2), got {pairs.shape}")
    parts = [x for x in (p_g, p_c, p_a, p_o) if x is not None]
    if not parts:
        raise ContractError("no branch scores supplied")
    n_samples = parts[0].shape[0]
    scores = np.zeros((n_samples, pairs.shape[0]))
    if p_g is not None:
        scores += beta * p_g
    if p_c is not None:
        scores += (1.0 - beta) * p_c
    if p_a is not None and p_o is not None:
        if pairs.size and (pairs[:, 0].max() >= p_a.shape[1] or pairs[:, 0].min() < 0):
            raise IndexError("candidate pair references an unknown attribute")
        if pairs.size and (pairs[:, 1].max() >= p_o.shape[1] or pairs[:, 1].min() < 0):
            raise IndexError("candidate pair references an unknown object")
        scores += p_a[:, pairs[:, 0]] * p_o[:, pairs[:, 1]]
    return scores


class CompositionModel(Module):
    def __init__(self, cfg):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.rng_box = RngBox(rng_for(cfg.seed, "dropout"))
        self.encoder = StubImageEncoder(
            grid_patches=cfg.grid_patches,
            patch_dim=cfg.patch_dim,
            d_v=cfg.d_v,
            d_t=cfg.d_t,
            lower_layers=cfg.lower_layers,
            upper_layers=cfg.upper_layers,
            heads=cfg.heads,
            rng=rng_for(cfg.seed, "image-encoder"),
            lora_rank=cfg.lora_rank,
            lora_dropout=cfg.lora_dropout,
            lora_scale=cfg.lora_scale,
            rng_box=self.rng_box,
        )
        self.text_encoder = StubTextEncoder(
            d_t=cfg.d_t,
            layers=cfg.text_layers,
            heads=cfg.branch_heads,
            rng=rng_for(cfg.seed, "text-encoder"),
        )
        self.tables = EmbeddingTables(
            n_attributes=cfg.n_attributes,
            n_objects=cfg.n_objects,
            d_t=cfg.d_t,
            prefix_len=cfg.prefix_tokens,
            rng=rng_for(cfg.seed, "embeddings"),
        )
        self.latents = Parameter(
            rng_for(cfg.seed, "latents").normal(0.0, 0.02, (cfg.latent_units, cfg.d_v))
        )
        self.gca = GatedCrossAttention(
            cfg.d_v, cfg.heads, rng_for(cfg.seed, "gca"), gate_enabled=cfg.enable_gate
        )
        self.spaces = SpaceModeler(
            cfg.d_v, cfg.d_t, cfg.branch_heads, cfg.branch_layers, rng_for(cfg.seed, "spaces")
        )
        self.log_tau = Parameter(np.log(cfg.tau_init))
        assign_parameter_names(self)

    # -- configuration views ---------------------------------------------------

    @property
    def latent_branches(self):
        return tuple(b for b in ("a", "o", "c") if getattr(self.cfg, f"enable_{b}"))

    def reset_dropout_rng(self, seed):
        self.rng_box.generator = rng_for(seed, "dropout")

    def tau(self):
        return texp(self.log_tau)

    def trainable_parameters(self):
        """Non-frozen parameters actually reachable from the active losses."""
        modules = [self.encoder, self.text_encoder, self.tables]
        if self.latent_branches:
            modules.append(self.gca)
        params = []
        for m in modules:
            params.extend(p for p in m.trainable_parameters() if not p.frozen)
        if self.latent_branches:
            params.append(self.latents)
        branch_map = {
            "a": (self.spaces.attr_encoder, self.spaces.attr_proj),
            "o": (self.spaces.obj_encoder, self.spaces.obj_proj),
            "c": (self.spaces.comp_encoder, self.spaces.comp_proj),
        }
        for b in self.latent_branches:
            for m in branch_map[b]:
                params.extend(m.trainable_parameters())
        params.append(self.log_tau)
        return params

    # -- forward paths -----------------------------------------------------------

    def image_representations(self, images):
        """Branch vectors for a batch of feature grids; disabled branches None."""
        images = as_tensor(images)
        hidden, f_g = self.encoder(images)
        vectors = {"a": None, "o": None, "c": None}
        branches = self.latent_branches
        if branches:
            k, d_v = self.latents.shape
            q0 = broadcast_to(reshape(self.latents, (1, k, d_v)), (images.shape[0], k, d_v))
            refined = self.gca(q0, hidden[1:])
            vectors.update(self.spaces.branch_vectors(refined, branches))
        return BranchRepresentations(
            f_a=vectors["a"],
            f_o=vectors["o"],
            f_c=vectors["c"],
            f_g=f_g if self.cfg.enable_g else None,
        )

    def prompt_bank(self, pairs):
        """Encode the prompt sets needed by the enabled branches."""
        pairs = np.asarray(pairs, dtype=np.intp)
        t_a = t_o = t_c = None
        if self.cfg.enable_a:
            t_a = self.text_encoder(self.tables.attribute_prompts())
        if self.cfg.enable_o:
            t_o = self.text_encoder(self.tables.object_prompts())
        if self.cfg.enable_c or self.cfg.enable_g:
            t_c = self.text_encoder(self.tables.composition_prompts(pairs))
        return PromptBank(t_a=t_a, t_o=t_o, t_c=t_c, pairs=pairs)

    def training_loss(self, images, y_attr, y_obj, seen_pairs, attr_mask=None, stats=None):
        """Weighted four-branch loss on a batch whose labels are seen pairs."""
        seen_pairs = np.asarray(seen_pairs, dtype=np.intp)
        pair_index = {tuple(p): i for i, p in enumerate(seen_pairs)}
        comp_labels = np.empty(len(y_attr), dtype=np.intp)
        for i, (a, o) in enumerate(zip(y_attr, y_obj)):
            key = (int(a), int(o))
            if key not in pair_index:
                raise ContractError(f"label composition {key} is not a seen composition")
            comp_labels[i] = pair_index[key]

        reps = self.image_representations(images)
        bank = self.prompt_bank(seen_pairs)
        tau = self.tau()
        cfg = self.cfg
        probs, labels, alphas = {}, {}, {}
        if cfg.enable_a:
            probs["a"] = branch_probabilities(reps.f_a, bank.t_a, tau)
            labels["a"], alphas["a"] = np.asarray(y_attr), cfg.alpha_a
        if cfg.enable_o:
            probs["o"] = branch_probabilities(reps.f_o, bank.t_o, tau)
            labels["o"], alphas["o"] = np.asarray(y_obj), cfg.alpha_o
        if cfg.enable_c:
            probs["c"] = branch_probabilities(reps.f_c, bank.t_c, tau)
            labels["c"], alphas["c"] = comp_labels, cfg.alpha_c
        if cfg.enable_g:
            probs["g"] = branch_probabilities(reps.f_g, bank.t_c, tau)
            labels["g"], alphas["g"] = comp_labels, cfg.alpha_g
        return total_loss(probs, labels, alphas, attr_mask=attr_mask, stats=stats)

    def score_candidates(self, images, pairs):
        """Fused inference scores over a candidate pair set (numpy, no tape).

        The composition and global branch probabilities are re-normalized
        over the evaluation candidate set; attribute/object rows stay over
        the primitive sets.
        """
        pairs = np.asarray(pairs, dtype=np.intp)
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                reps = self.image_representations(images)
                bank = self.prompt_bank(pairs)
                tau = self.tau()
                cfg = self.cfg
                p_a = p_o = p_c = p_g = None
                if cfg.enable_a:
                    p_a = branch_probabilities(reps.f_a, bank.t_a, tau).data
                if cfg.enable_o:
                    p_o = branch_probabilities(reps.f_o, bank.t_o, tau).data
                if cfg.enable_c:
                    p_c = branch_probabilities(reps.f_c, bank.t_c, tau).data
                if cfg.enable_g:
                    p_g = branch_probabilities(reps.f_g, bank.t_c, tau).data
                return fuse_scores(p_g, p_c, p_a, p_o, pairs, cfg.beta)
        finally:
            self.train(was_training)
