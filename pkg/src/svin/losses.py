"""Training objectives for the motion and interpolation networks.

All functions take torch tensors shaped ``(N, C, D, H, W)`` (or lists of
them, one per pyramid level, coarsest first) and return a scalar tensor.
Batch items are summed, which matches the sums over phase index ``k``.

Squared-norm terms are mean squared voxel differences.  The L1 gradient
terms default to a plain sum over all entries; ``reduction="mean"`` divides
by the number of entries per item, which keeps them on the same scale as the
mean-square terms and is what the training configs use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import torch

from .exceptions import ShapeError, ValidationError
from .grid import gradient_t

REDUCTIONS = ("sum", "mean")


def _as_tensor(x):
    if hasattr(x, "tensor"):
        return x.tensor(dtype=torch.float64)
    return torch.as_tensor(x)


def _levels(xs) -> list[torch.Tensor]:
    return [_as_tensor(x) for x in xs]


def _l1(x: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "sum":
        return x.abs().sum()
    if reduction == "mean":
        return x.abs().flatten(1).mean(1).sum()
    raise ValidationError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")


def mse_per_item(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).pow(2).flatten(1).mean(1).sum()


def smoothness_loss(fields: Sequence, reduction: str = "sum") -> torch.Tensor:
    """Sum over levels of the L1 norm of the forward-difference Jacobian."""
    fields = _levels(fields)
    total = fields[0].new_zeros(())
    for f in fields:
        if f.ndim != 5 or f.shape[1] != 3:
            raise ShapeError(f"expected (N, 3, D, H, W) field, got {tuple(f.shape)}")
        total = total + _l1(gradient_t(f), reduction)
    return total


def similarity_loss(warped: Sequence, targets: Sequence) -> torch.Tensor:
    """Sum over levels of the mean squared difference."""
    warped, targets = _levels(warped), _levels(targets)
    if len(warped) != len(targets):
        raise ShapeError(f"{len(warped)} warped levels vs {len(targets)} targets")
    total = warped[0].new_zeros(())
    for w, t in zip(warped, targets):
        total = total + mse_per_item(w, t)
    return total


def loss_similar(pred: Sequence[Sequence], truth: Sequence[Sequence]) -> torch.Tensor:
    """Interpolated-volume loss: ``pred[k][c]`` against ``truth[k][c]``."""
    if len(pred) != len(truth):
        raise ShapeError(f"{len(pred)} predicted phases vs {len(truth)} ground-truth phases")
    total = torch.zeros((), dtype=torch.float64)
    for p, q in zip(pred, truth):
        total = total + similarity_loss(p, q)
    return total


def loss_regression(t_pred, t_true) -> torch.Tensor:
    t_pred, t_true = torch.as_tensor(t_pred), torch.as_tensor(t_true)
    if t_pred.shape != t_true.shape:
        raise ShapeError(f"{tuple(t_pred.shape)} predicted phases vs {tuple(t_true.shape)} true")
    return (t_pred - t_true.to(t_pred.dtype)).abs().sum()


def loss_bidirectional(ed_fields: Sequence, es_fields: Sequence, reduction: str = "sum") -> torch.Tensor:
    """Penalise ``grad(ed_t) + grad(es_t)`` per level."""
    ed_fields, es_fields = _levels(ed_fields), _levels(es_fields)
    if len(ed_fields) != len(es_fields):
        raise ShapeError(f"{len(ed_fields)} vs {len(es_fields)} levels")
    total = ed_fields[0].new_zeros(())
    for a, b in zip(ed_fields, es_fields):
        if a.shape != b.shape:
            raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
        # the difference operator is linear
        total = total + _l1(gradient_t(a + b), reduction)
    return total


@dataclass
class LossWeights:
    similar: float = 500.0
    regression: float = 1.0
    consistency: float = 50.0

    def __post_init__(self):
        bad = [f"loss weight {name!r} must be a nonnegative real, got {v}"
               for name, v in asdict(self).items() if not (math.isfinite(v) and v >= 0)]
        if bad:
            raise ValidationError("; ".join(bad))


def loss_total(similar, regression, consistency, weights: LossWeights | None = None) -> torch.Tensor:
    weights = weights or LossWeights()
    parts = {"similar": similar, "regression": regression, "consistency": consistency}
    for name, v in parts.items():
        if not torch.isfinite(torch.as_tensor(v)).all():
            raise ValidationError(f"loss term {name!r} is not finite")
    return (
        weights.similar * torch.as_tensor(similar)
        + weights.regression * torch.as_tensor(regression)
        + weights.consistency * torch.as_tensor(consistency)
    )
