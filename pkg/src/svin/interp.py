"""Sequential interpolation network with the phase-regression constraint.

For a phase ``t`` the frozen motion fields give a closed-form scaffold of
intermediate fields.  A multi-scale encoder-decoder looks at both end
volumes, both warped candidates, both scaffold fields and ``t``, and emits
per level: field residuals (added coarse-to-fine onto the scaffold), a
blend-weight logit and an additive intensity correction.  A small regression
network reads the refined fields' departure from the linear scaffold and
predicts the phase.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .exceptions import ShapeError, TrainingError, ValidationError
from .grid import Volume, VectorField, check_phase, resize_field_t, warp_t
from .losses import REDUCTIONS, LossWeights, loss_bidirectional, loss_regression, loss_total, similarity_loss
from .motion import MotionNet, TrainState, step_rng
from .nets import MultiScaleUNet, n_parameters, zero_head
from .pyramid import check_divisible, level_dims, pyramid_t, upsample_field_t
from .synthesis import WeightMap, blend_weighted_t, consistent_fields_t, linear_fields_t

log = logging.getLogger(__name__)

SCAFFOLDS = {"consistent": consistent_fields_t, "linear": linear_fields_t}
HEAD_CHANNELS = 8  # 3 + 3 field residuals, gamma logit, intensity correction


@dataclass
class InterpConfig:
    width: int = 8
    lr: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    reduction: str = "mean"
    scaffold: str = "consistent"
    steps: int = 300
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        errors = []
        if not self.lr > 0:
            errors.append(f"lr must be > 0, got {self.lr}")
        if self.width < 4:
            errors.append(f"width must be >= 4, got {self.width}")
        if self.reduction not in REDUCTIONS:
            errors.append(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if self.scaffold not in SCAFFOLDS:
            errors.append(f"scaffold must be one of {tuple(SCAFFOLDS)}, got {self.scaffold!r}")
        if self.steps < 0:
            errors.append(f"steps must be >= 0, got {self.steps}")
        if errors:
            raise ValidationError("; ".join(errors))


class PhaseRegressor(nn.Module):
    """Maps the two residual fields (6 channels) to a scalar phase."""

    def __init__(self, width: int = 8):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv3d(6, width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv3d(width, 2 * width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool3d(1),
            nn.Flatten(),
        )
        self.head = nn.Linear(2 * width, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, d_fwd, d_bwd):
        if d_fwd.shape != d_bwd.shape:
            raise ShapeError(f"residual shapes differ: {tuple(d_fwd.shape)} vs {tuple(d_bwd.shape)}")
        return self.head(self.features(torch.cat([d_fwd, d_bwd], 1)))[:, 0]


@dataclass
class InterpTensors:
    volumes: list[torch.Tensor]  # per level, coarsest first
    gamma: list[torch.Tensor]
    ed_fields: list[torch.Tensor]
    es_fields: list[torch.Tensor]
    t_pred: torch.Tensor  # (N,)


class InterpNet(nn.Module):
    def __init__(self, config: InterpConfig | None = None):
        super().__init__()
        self.config = config or InterpConfig()
        self.backbone = MultiScaleUNet(11, self.config.width)
        self.heads = nn.ModuleList(zero_head(c, HEAD_CHANNELS) for c in self.backbone.channels)
        self.regressor = PhaseRegressor(self.config.width)

    def n_parameters(self) -> int:
        return n_parameters(self)

    def forward(self, i_ed, i_es, fwd, bwd, t) -> InterpTensors:
        """Tensors shaped (N, C, D, H, W); ``t`` is a float or an (N,) tensor in (0, 1)."""
        if not (i_ed.shape == i_es.shape and fwd.shape == bwd.shape and fwd.shape[2:] == i_ed.shape[2:]):
            raise ShapeError("interpolation inputs disagree in shape")
        check_divisible(i_ed.shape[2:])
        n = i_ed.shape[0]
        t = torch.as_tensor(t, dtype=i_ed.dtype, device=i_ed.device).reshape(-1)
        t = t.expand(n) if t.numel() == 1 else t
        tb = t.view(n, 1, 1, 1, 1)

        s_ed, s_es = SCAFFOLDS[self.config.scaffold](fwd, bwd, tb)
        w_ed, w_es = warp_t(i_ed, s_ed), warp_t(i_es, s_es)
        t_map = tb.expand(n, 1, *i_ed.shape[2:])
        feats = self.backbone(torch.cat([i_ed, i_es, w_ed, w_es, s_ed, s_es, t_map], 1))

        ed_levels, es_levels = pyramid_t(i_ed), pyramid_t(i_es)
        volumes, gammas, ed_fields, es_fields = [], [], [], []
        res_ed = res_es = None
        for lvl, (feat, head) in enumerate(zip(feats, self.heads)):
            out = head(feat)
            size = out.shape[2:]
            if res_ed is None:
                res_ed, res_es = out[:, 0:3], out[:, 3:6]
            else:
                res_ed = upsample_field_t(res_ed) + out[:, 0:3]
                res_es = upsample_field_t(res_es) + out[:, 3:6]
            f_ed = resize_field_t(s_ed, size) + res_ed
            f_es = resize_field_t(s_es, size) + res_es
            gamma = torch.sigmoid(out[:, 6:7])
            vol = blend_weighted_t(ed_levels[lvl], es_levels[lvl], f_ed, f_es, tb, gamma) + out[:, 7:8]
            volumes.append(vol)
            gammas.append(gamma)
            ed_fields.append(f_ed)
            es_fields.append(f_es)

        d_fwd = ed_fields[-1] - tb * fwd
        d_bwd = es_fields[-1] - (1 - tb) * bwd
        t_pred = self.regressor(d_fwd, d_bwd)
        return InterpTensors(volumes, gammas, ed_fields, es_fields, t_pred)


@dataclass(eq=False)
class InterpOutput:
    volumes: list[Volume]  # per level, coarsest first; volumes[-1] is full size
    gamma: WeightMap
    ed_field: VectorField
    es_field: VectorField
    t_pred: float

    @property
    def volume(self) -> Volume:
        return self.volumes[-1]


def _param(model):
    p = next(model.parameters())
    return p.dtype, p.device


def interp_forward(model: InterpNet, i_ed: Volume, i_es: Volume, fwd: VectorField, bwd: VectorField, t: float) -> InterpOutput:
    t = check_phase(t, open_interval=True)
    if len({i_ed.dims, i_es.dims, fwd.dims, bwd.dims}) != 1:
        raise ShapeError("interpolation inputs disagree in dims")
    dtype, device = _param(model)
    with torch.no_grad():
        out = model(
            i_ed.tensor(dtype, device), i_es.tensor(dtype, device),
            fwd.tensor(dtype, device), bwd.tensor(dtype, device), t,
        )
    dims = level_dims(i_ed.dims)
    vols = []
    for lvl, v in enumerate(out.volumes):
        scale = dims[-1][0] / dims[lvl][0]
        vols.append(Volume.from_tensor(v, tuple(s * scale for s in i_ed.spacing)))
    gamma = out.gamma[-1][0, 0].cpu().numpy().astype(np.float32)
    return InterpOutput(
        volumes=vols,
        gamma=WeightMap(gamma),
        ed_field=VectorField.from_tensor(out.ed_fields[-1], i_ed.spacing),
        es_field=VectorField.from_tensor(out.es_fields[-1], i_ed.spacing),
        t_pred=float(out.t_pred[0]),
    )


def regression_forward(model: InterpNet, d_fwd: VectorField, d_bwd: VectorField) -> float:
    if d_fwd.dims != d_bwd.dims:
        raise ShapeError(f"residual dims {d_fwd.dims} != {d_bwd.dims}")
    dtype, device = _param(model)
    with torch.no_grad():
        return float(model.regressor(d_fwd.tensor(dtype, device), d_bwd.tensor(dtype, device))[0])


def interp_losses(out: InterpTensors, truth_levels: Sequence[torch.Tensor], t, weights: LossWeights, reduction: str):
    """``truth_levels`` holds the ground-truth pyramids batched over phases."""
    similar = similarity_loss(out.volumes, truth_levels)
    regression = loss_regression(out.t_pred, torch.as_tensor(t))
    consistency = loss_bidirectional(out.ed_fields, out.es_fields, reduction)
    total = loss_total(similar, regression, consistency, weights)
    return total, similar, regression, consistency


@torch.no_grad()
def motion_pair(motion: MotionNet, i_ed: torch.Tensor, i_es: torch.Tensor):
    """Full-resolution forward (ED->ES) and backward (ES->ED) fields."""
    fields = motion(torch.cat([i_ed, i_es]), torch.cat([i_es, i_ed]))[-1]
    n = i_ed.shape[0]
    return fields[:n], fields[n:]


def new_interp_state(config: InterpConfig, device="cpu") -> TrainState:
    torch.manual_seed(config.seed)
    model = InterpNet(config).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    return TrainState(model, opt)


def _prepare(sample, motion, device, pair=None):
    if not sample.intermediates:
        raise ValidationError(f"sample {sample.name!r} has no ground-truth intermediates")
    ed, es = sample.ed.tensor(device=device), sample.es.tensor(device=device)
    if pair is None:
        fwd, bwd = motion_pair(motion, ed, es)
    else:
        fwd, bwd = (f.tensor(device=device) for f in pair)
    truth = torch.cat([v.tensor(device=device) for _, v in sample.intermediates])
    t = torch.tensor(sample.phases, dtype=torch.float32, device=device)
    return ed, es, fwd, bwd, pyramid_t(truth), t


def train_interp(
    dataset: Sequence,
    motion: MotionNet,
    config: InterpConfig,
    state: TrainState | None = None,
    steps: int | None = None,
    device="cpu",
    callback: Callable[[dict], None] | None = None,
    fields: Sequence[tuple[VectorField, VectorField]] | None = None,
) -> TrainState:
    """Fit the interpolation network with the motion network frozen.

    Each step takes one sample and all of its intermediates as a batch.
    ``fields`` may supply precomputed full-resolution (forward, backward)
    motion fields per sample; otherwise they are computed once up front.
    """
    if len(dataset) == 0:
        raise ValidationError("interpolation training needs at least one sample")
    if fields is not None and len(fields) != len(dataset):
        raise ValidationError(f"got {len(fields)} field pairs for {len(dataset)} samples")
    motion.eval()
    pairs = fields if fields is not None else [None] * len(dataset)
    prepared = [_prepare(s, motion, device, p) for s, p in zip(dataset, pairs)]

    state = state or new_interp_state(config, device)
    model, opt = state.model, state.optimizer
    model.train()
    n = config.steps if steps is None else steps
    for _ in range(n):
        step = state.step
        idx = int(step_rng(config.seed, step).integers(len(dataset)))
        ed, es, fwd, bwd, truth, t = prepared[idx]
        k = t.shape[0]
        opt.zero_grad()
        out = model(ed.expand(k, -1, -1, -1, -1), es.expand(k, -1, -1, -1, -1),
                    fwd.expand(k, -1, -1, -1, -1), bwd.expand(k, -1, -1, -1, -1), t)
        total, sim, reg, cons = interp_losses(out, truth, t, config.weights, config.reduction)
        if not torch.isfinite(total):
            raise TrainingError(f"non-finite interpolation loss at step {step}", step=step)
        total.backward()
        opt.step()
        rec = {
            "step": step, "sample": idx, "loss": total.item(),
            "similar": sim.item(), "regression": reg.item(), "consistency": cons.item(),
        }
        state.history.append(rec)
        state.step += 1
        if callback:
            callback(rec)
        if step % 50 == 0:
            log.info("interp step %d loss %.5f", step, rec["loss"])
    model.eval()
    return state


def infer_sequence(motion: MotionNet, model: InterpNet, i_ed: Volume, i_es: Volume, count: int = 3):
    """``count`` evenly spaced full-resolution volumes, as ``[(t, Volume), ...]``."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if i_ed.dims != i_es.dims:
        raise ShapeError(f"ED dims {i_ed.dims} != ES dims {i_es.dims}")
    dtype, device = _param(model)
    ed, es = i_ed.tensor(dtype, device), i_es.tensor(dtype, device)
    fwd, bwd = motion_pair(motion, ed, es)
    out = []
    with torch.no_grad():
        for k in range(1, count + 1):
            t = k / (count + 1)
            res = model(ed, es, fwd, bwd, t)
            out.append((t, Volume.from_tensor(res.volumes[-1], i_ed.spacing)))
    return out


def linear_blend_sequence(motion: MotionNet, i_ed: Volume, i_es: Volume, phases: Sequence[float]):
    """Warped linear blend with linearly scaled motion fields (no learning)."""
    p = next(motion.parameters())
    ed, es = i_ed.tensor(p.dtype, p.device), i_es.tensor(p.dtype, p.device)
    fwd, bwd = motion_pair(motion, ed, es)
    out = []
    with torch.no_grad():
        for t in phases:
            f_ed, f_es = linear_fields_t(fwd, bwd, t)
            v = (1 - t) * warp_t(ed, f_ed) + t * warp_t(es, f_es)
            out.append((t, Volume.from_tensor(v, i_ed.spacing)))
    return out
