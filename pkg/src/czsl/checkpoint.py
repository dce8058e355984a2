"""Checkpoint persistence: one archive holding every named parameter array
(trainable and frozen) plus the config JSON and its hash.

Loading rebuilds the model from the embedded config after verifying the
stored hash against the stored config (tamper guard) and, when the caller
supplies an expected config, against that too.
"""

import io
import json

import numpy as np

from .config import ExperimentConfig
from .model import CompositionModel

_CONFIG_KEY = "__config__"
_HASH_KEY = "__hash__"


class CheckpointError(ValueError):
    """The checkpoint file is unreadable or structurally wrong."""


class VersionError(ValueError):
    """The checkpoint's config hash does not match."""


def save_checkpoint(model, path):
    """Write the model's parameters and config to `path` (npz archive)."""
    arrays = {f"param/{name}": data for name, data in model.state_dict().items()}
    cfg_json = model.cfg.to_json()
    arrays[_CONFIG_KEY] = np.frombuffer(cfg_json.encode(), dtype=np.uint8)
    arrays[_HASH_KEY] = np.frombuffer(model.cfg.hash().encode(), dtype=np.uint8)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    with open(path, "wb") as fh:
        fh.write(buffer.getvalue())


def read_checkpoint(path):
    """Parse a checkpoint into (config, {param name: array}) with hash checks."""
    try:
        with np.load(path) as archive:
            payload = {key: archive[key] for key in archive.files}
    except Exception as exc:
        raise CheckpointError(f"cannot parse checkpoint {path}: {exc}") from exc
    if _CONFIG_KEY not in payload or _HASH_KEY not in payload:
        raise CheckpointError(f"checkpoint {path} is missing config metadata")
    cfg_json = payload.pop(_CONFIG_KEY).tobytes().decode()
    stored_hash = payload.pop(_HASH_KEY).tobytes().decode()
    try:
        cfg = ExperimentConfig.from_json(cfg_json)
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"checkpoint config unreadable: {exc}") from exc
    if cfg.hash() != stored_hash:
        raise VersionError(
            "checkpoint hash does not match its embedded config "
            f"(stored {stored_hash[:12]}..., recomputed {cfg.hash()[:12]}...)"
        )
    params = {}
    for key, value in payload.items():
        if not key.startswith("param/"):
            raise CheckpointError(f"unexpected checkpoint entry {key!r}")
        params[key[len("param/") :]] = value
    return cfg, params


def load_checkpoint(path, config=None):
    """Rebuild the model stored at `path`.

    When `config` is given its hash must match the checkpoint's; the
    refusal protects against evaluating a checkpoint under a silently
    different configuration.
    """
    cfg, params = read_checkpoint(path)
    if config is not None and config.hash() != cfg.hash():
        raise VersionError(
            "checkpoint was written with a different config "
            f"(stored {cfg.hash()[:12]}..., expected {config.hash()[:12]}...)"
        )
    model = CompositionModel(cfg)
    try:
        model.load_state_dict(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint parameters do not fit the model: {exc}") from exc
    model.eval()
    return model, cfg
