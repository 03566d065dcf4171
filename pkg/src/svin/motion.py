"""Unsupervised multi-scale motion network.

One shared network maps an ordered pair ``(I_i, I_j)`` to displacement
fields at three pyramid levels such that ``warp(I_i | phi) ~ I_j``.  The
level-1 field is predicted directly; each finer level adds a predicted
residual to the upsampled coarser field.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .exceptions import ShapeError, TrainingError, ValidationError
from .grid import Volume, VectorField, warp_t
from .losses import REDUCTIONS, similarity_loss, smoothness_loss
from .nets import MultiScaleUNet, n_parameters, zero_head
from .pyramid import check_divisible, pyramid_t, upsample_field_t

log = logging.getLogger(__name__)


@dataclass
class MotionConfig:
    width: int = 8
    lr: float = 1e-4
    similarity_weight: float = 1.0
    smoothness_weight: float = 0.01
    reduction: str = "mean"
    steps: int = 200
    seed: int = 0

    def __post_init__(self):
        errors = []
        if not self.lr > 0:
            errors.append(f"lr must be > 0, got {self.lr}")
        if self.width < 4:
            errors.append(f"width must be >= 4, got {self.width}")
        for name in ("similarity_weight", "smoothness_weight"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                errors.append(f"{name} must be a nonnegative real, got {v}")
        if self.reduction not in REDUCTIONS:
            errors.append(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if self.steps < 0:
            errors.append(f"steps must be >= 0, got {self.steps}")
        if errors:
            raise ValidationError("; ".join(errors))


class MotionNet(nn.Module):
    def __init__(self, config: MotionConfig | None = None):
        super().__init__()
        self.config = config or MotionConfig()
        self.backbone = MultiScaleUNet(2, self.config.width)
        self.heads = nn.ModuleList(zero_head(c, 3) for c in self.backbone.channels)

    def forward(self, i_src: torch.Tensor, i_tgt: torch.Tensor) -> list[torch.Tensor]:
        """Fields ``[level1, level2, level3]`` taking ``i_src`` towards ``i_tgt``."""
        if i_src.shape != i_tgt.shape:
            raise ShapeError(f"input shapes differ: {tuple(i_src.shape)} vs {tuple(i_tgt.shape)}")
        check_divisible(i_src.shape[2:])
        feats = self.backbone(torch.cat([i_src, i_tgt], 1))
        fields = []
        for feat, head in zip(feats, self.heads):
            phi = head(feat)
            if fields:
                phi = upsample_field_t(fields[-1]) + phi
            fields.append(phi)
        return fields

    def n_parameters(self) -> int:
        return n_parameters(self)


def motion_forward(model: MotionNet, i_i: Volume, i_j: Volume) -> list[VectorField]:
    """Value-level inference: three fields, coarsest first."""
    if i_i.dims != i_j.dims:
        raise ShapeError(f"volume dims {i_i.dims} != {i_j.dims}")
    p = next(model.parameters())
    with torch.no_grad():
        fields = model(i_i.tensor(p.dtype, p.device), i_j.tensor(p.dtype, p.device))
    out = []
    for lvl, f in enumerate(fields):
        scale = 2 ** (len(fields) - 1 - lvl)
        out.append(VectorField.from_tensor(f, tuple(s * scale for s in i_i.spacing)))
    return out


def motion_losses(model: MotionNet, i_src, i_tgt, config: MotionConfig):
    """Returns ``(total, similarity, smoothness, fields)`` for a batch of pairs."""
    fields = model(i_src, i_tgt)
    src_levels, tgt_levels = pyramid_t(i_src), pyramid_t(i_tgt)
    warped = [warp_t(s, f) for s, f in zip(src_levels, fields)]
    sim = similarity_loss(warped, tgt_levels)
    smooth = smoothness_loss(fields, config.reduction)
    total = config.similarity_weight * sim + config.smoothness_weight * smooth
    return total, sim, smooth, fields


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Per-step generator so that resumed runs see the same sample order."""
    return np.random.default_rng([seed, step])


@dataclass
class TrainState:
    model: nn.Module
    optimizer: torch.optim.Optimizer
    step: int = 0
    history: list[dict] = field(default_factory=list)


def new_motion_state(config: MotionConfig, device="cpu") -> TrainState:
    torch.manual_seed(config.seed)
    model = MotionNet(config).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    return TrainState(model, opt)


def _pair_batch(sample, device):
    ed = sample.ed.tensor(device=device)
    es = sample.es.tensor(device=device)
    return torch.cat([ed, es]), torch.cat([es, ed])


def train_motion(
    dataset: Sequence,
    config: MotionConfig,
    state: TrainState | None = None,
    steps: int | None = None,
    device="cpu",
    callback: Callable[[dict], None] | None = None,
) -> TrainState:
    """Fit the motion network on (ED, ES) pairs in both orderings.

    ``state`` continues a previous run; ``steps`` (default ``config.steps``)
    counts the steps to take in this call.
    """
    if len(dataset) == 0:
        raise ValidationError("motion training needs at least one sample")
    state = state or new_motion_state(config, device)
    model, opt = state.model, state.optimizer
    model.train()
    n = config.steps if steps is None else steps
    for _ in range(n):
        step = state.step
        idx = int(step_rng(config.seed, step).integers(len(dataset)))
        src, tgt = _pair_batch(dataset[idx], device)
        opt.zero_grad()
        total, sim, smooth, _ = motion_losses(model, src, tgt, config)
        if not torch.isfinite(total):
            raise TrainingError(f"non-finite motion loss at step {step}", step=step)
        total.backward()
        opt.step()
        rec = {"step": step, "sample": idx, "loss": total.item(), "similarity": sim.item(), "smoothness": smooth.item()}
        state.history.append(rec)
        state.step += 1
        if callback:
            callback(rec)
        if step % 50 == 0:
            log.info("motion step %d loss %.5f", step, rec["loss"])
    model.eval()
    return state


def config_dict(config) -> dict:
    return asdict(config)
