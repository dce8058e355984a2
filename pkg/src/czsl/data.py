"""Synthetic compositional benchmark generator.

Each "image" is a grid of feature patches: a handful of signal patches
carrying an attribute-modulated object prototype at random positions,
the rest background clutter, everything plus Gaussian noise. Attribute
prototypes live in the first half of the patch dimensions and object
prototypes in the second half (both orthonormal within their block), so
a fixed linear readout separates the primitives perfectly when noise and
clutter are switched off — the calibration knob for the generator.

The composition grid is partitioned into seen and unseen pairs at the
configured fraction, repaired so every attribute and object occurs in at
least one seen pair. Training samples come from seen pairs only; the
test split mixes a subset of the seen pairs with every unseen pair.
Everything is a pure function of the master seed.
"""

from dataclasses import dataclass

import numpy as np

from .seeding import rng_for


class GenerationError(ValueError):
    """The requested dataset shape is infeasible."""


@dataclass
class Splits:
    seen_pairs: np.ndarray  # (S, 2) training composition universe
    unseen_pairs: np.ndarray  # (U, 2) unseen test compositions
    test_seen_pairs: np.ndarray  # subset of seen_pairs present in the test split
    train_indices: np.ndarray
    test_indices: np.ndarray
    n_attributes: int
    n_objects: int


@dataclass
class SyntheticDataset:
    n_attributes: int
    n_objects: int
    attr_prototypes: np.ndarray  # (n, patch_dim), support on the first half dims
    obj_prototypes: np.ndarray  # (m, patch_dim), support on the second half dims
    images: np.ndarray  # (N, grid_patches, patch_dim)
    y_attr: np.ndarray  # (N,)
    y_obj: np.ndarray  # (N,)
    seed: int


def _orthonormal_rows(count, dim, rng):
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q[:, :count].T.copy()


def _pick_seen_pairs(n, m, target, rng):
    """A random seen set of exactly `target` pairs covering every primitive."""
    cover = []
    objs = rng.permutation(m)
    attrs = rng.permutation(n)
    for i, a in enumerate(attrs):
        cover.append((int(a), int(objs[i % m])))
    covered_objs = {o for _, o in cover}
    for o in range(m):
        if o not in covered_objs:
            cover.append((int(rng.integers(0, n)), o))
    cover = list(dict.fromkeys(cover))
    if len(cover) > target:
        raise GenerationError(
            f"seen fraction too low: covering all {n} attributes and {m} objects "
            f"needs {len(cover)} compositions but the target is {target}"
        )
    chosen = set(cover)
    remaining = [(a, o) for a in range(n) for o in range(m) if (a, o) not in chosen]
    order = rng.permutation(len(remaining))
    for idx in order:
        if len(chosen) >= target:
            break
        chosen.add(remaining[idx])
    seen = sorted(chosen)
    unseen = sorted((a, o) for a in range(n) for o in range(m) if (a, o) not in chosen)
    return np.array(seen, dtype=np.intp), np.array(unseen, dtype=np.intp)


def generate_dataset(cfg):
    """Build the synthetic benchmark for a config; returns (dataset, splits)."""
    n, m = cfg.n_attributes, cfg.n_objects
    if n < 2 or m < 2:
        raise GenerationError(f"need at least 2 attributes and 2 objects, got {n}x{m}")
    half = cfg.patch_dim // 2
    if n > half or m > cfg.patch_dim - half:
        raise GenerationError(
            f"patch_dim={cfg.patch_dim} too small: prototype blocks hold at most "
            f"{half} attributes and {cfg.patch_dim - half} objects"
        )

    rng = rng_for(cfg.seed, "dataset")
    attr_protos = np.zeros((n, cfg.patch_dim))
    attr_protos[:, :half] = _orthonormal_rows(n, half, rng)
    obj_protos = np.zeros((m, cfg.patch_dim))
    obj_protos[:, half:] = _orthonormal_rows(m, cfg.patch_dim - half, rng)

    target = int(round(cfg.seen_fraction * n * m))
    if target >= n * m:
        raise GenerationError(
            f"seen fraction {cfg.seen_fraction} leaves no unseen compositions"
        )
    seen, unseen = _pick_seen_pairs(n, m, target, rng)

    n_test_seen = max(1, int(round(cfg.test_seen_fraction * len(seen))))
    test_seen = seen[np.sort(rng.choice(len(seen), size=n_test_seen, replace=False))]

    def make_image(a, o):
        img = cfg.clutter_scale * rng.normal(size=(cfg.grid_patches, cfg.patch_dim))
        positions = rng.choice(cfg.grid_patches, size=cfg.signal_patches, replace=False)
        signal = (
            attr_protos[a]
            + obj_protos[o]
            + cfg.modulation_strength * np.roll(attr_protos[a], half) * obj_protos[o]
        )
        img[positions] = signal
        if cfg.noise_sigma:
            img += cfg.noise_sigma * rng.normal(size=img.shape)
        return img

    images, y_attr, y_obj = [], [], []

    def emit(pairs, count):
        for a, o in pairs:
            for _ in range(count):
                images.append(make_image(a, o))
                y_attr.append(a)
                y_obj.append(o)

    emit(seen, cfg.train_samples_per_composition)
    n_train = len(images)
    emit(test_seen, cfg.test_samples_per_composition)
    emit(unseen, cfg.test_samples_per_composition)

    dataset = SyntheticDataset(
        n_attributes=n,
        n_objects=m,
        attr_prototypes=attr_protos,
        obj_prototypes=obj_protos,
        images=np.asarray(images),
        y_attr=np.asarray(y_attr, dtype=np.intp),
        y_obj=np.asarray(y_obj, dtype=np.intp),
        seed=cfg.seed,
    )
    splits = Splits(
        seen_pairs=seen,
        unseen_pairs=unseen,
        test_seen_pairs=test_seen,
        train_indices=np.arange(n_train),
        test_indices=np.arange(n_train, len(images)),
        n_attributes=n,
        n_objects=m,
    )
    return dataset, splits


def prototype_probe_accuracy(dataset, indices=None):
    """Fixed linear readout on mean-pooled patches; the generator calibration.

    Returns (attribute accuracy, object accuracy). With zero noise and no
    clutter both must be exactly 1.0.
    """
    idx = np.arange(len(dataset.images)) if indices is None else indices
    pooled = dataset.images[idx].mean(axis=1)
    attr_pred = np.argmax(pooled @ dataset.attr_prototypes.T, axis=1)
    obj_pred = np.argmax(pooled @ dataset.obj_prototypes.T, axis=1)
    return (
        float((attr_pred == dataset.y_attr[idx]).mean()),
        float((obj_pred == dataset.y_obj[idx]).mean()),
    )
