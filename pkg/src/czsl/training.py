"""Training loop: seeded batch order, attribute dropout, per-epoch stats,
step-decay scheduling, and a JSONL metrics log that is byte-identical
across reruns of the same config and seed.
"""

import json

import numpy as np

from .optim import Adam
from .seeding import rng_for
from .tensor import find_first_nonfinite


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss)."""


def _batches(count, batch_size, rng):
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def train_epoch(model, images, y_attr, y_obj, seen_pairs, optimizer, cfg, order_rng, mask_rng):
    """One pass over the training samples; returns mean per-branch losses."""
    model.train()
    stats = {"clamped": 0}
    sums = {}
    seen_count = 0
    for idx in _batches(len(images), cfg.batch_size, order_rng):
        attr_mask = None
        if cfg.enable_a and cfg.attribute_dropout > 0.0:
            attr_mask = (mask_rng.random(len(idx)) >= cfg.attribute_dropout).astype(float)
        loss, branch_values = model.training_loss(
            images[idx],
            y_attr[idx],
            y_obj[idx],
            seen_pairs,
            attr_mask=attr_mask,
            stats=stats,
        )
        if not np.isfinite(loss.data):
            bad = find_first_nonfinite(loss)
            name = getattr(bad, "name", "") or (bad.op if bad is not None else "loss")
            raise TrainingError(f"non-finite loss; first non-finite tensor: {name}")
        loss.backward()
        optimizer.step()
        for key, value in branch_values.items():
            sums[key] = sums.get(key, 0.0) + value * len(idx)
        sums["total"] = sums.get("total", 0.0) + float(loss.data) * len(idx)
        seen_count += len(idx)
    out = {f"loss_{k}": v / seen_count for k, v in sums.items()}
    out["clamped"] = stats["clamped"]
    return out


def fit(model, dataset, splits, cfg, log_path=None):
    """Train for cfg.epochs; returns the per-epoch stats list.

    When `log_path` is given, each epoch's stats are appended there as one
    JSON object per line.
    """
    optimizer = Adam(
        model.trainable_parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
        step_period=cfg.scheduler_step,
        step_factor=cfg.scheduler_factor,
    )
    order_rng = rng_for(cfg.seed, "batch-order")
    mask_rng = rng_for(cfg.seed, "attribute-dropout")
    model.reset_dropout_rng(cfg.seed)

    train = splits.train_indices
    images = dataset.images[train]
    y_attr = dataset.y_attr[train]
    y_obj = dataset.y_obj[train]

    history = []
    log_fh = open(log_path, "a") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            stats = train_epoch(
                model, images, y_attr, y_obj, splits.seen_pairs,
                optimizer, cfg, order_rng, mask_rng,
            )
            stats = {"epoch": epoch, "lr": optimizer.lr, **stats}
            history.append(stats)
            if log_fh:
                log_fh.write(json.dumps(stats, sort_keys=True) + "\n")
                log_fh.flush()
            optimizer.advance_epoch()
    finally:
        if log_fh:
            log_fh.close()
    model.eval()
    return history
