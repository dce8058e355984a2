"""Compositional zero-shot learning on a small numpy autodiff engine.

The package provides:

- `czsl.tensor` / `czsl.optim` / `czsl.gradcheck`: dense tensors with
  reverse-mode autodiff, Adam with step decay, and a finite-difference
  gradient oracle;
- `czsl.backbone`: deterministic stub image/text encoders with low-rank
  adapters, embedding tables and soft prompts;
- `czsl.attention`: gated cross-attention refining a set of latent units
  over the encoder's upper hidden states, one weight set shared across
  all refinement steps;
- `czsl.disentangle`: independent attribute/object/composition branch
  encoders with mean-pool projection heads;
- `czsl.model` / `czsl.training`: the four-branch scoring model, its
  weighted contrastive objective and the training loop;
- `czsl.evaluation`: the seen/unseen calibration-bias sweep with exact
  critical-value search plus a brute-force grid oracle;
- `czsl.data` / `czsl.experiment` / `czsl.cli`: synthetic benchmark
  generation, experiment orchestration and the command-line interface.
"""

from .tensor import (
    ContractError,
    Parameter,
    ShapeError,
    Tensor,
    no_grad,
    set_default_dtype,
)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "Parameter",
    "ShapeError",
    "Tensor",
    "no_grad",
    "set_default_dtype",
    "__version__",
]
