"""Volumes, displacement fields and the sampling kernels built on them.

Arrays are indexed ``(z, y, x)``.  A displacement field stores its three
components channel-first in the order ``(dx, dy, dz)`` and is expressed in
voxels of the grid it lives on.  Spacing is carried as metadata only.

Two layers live here: numpy-facing :class:`Volume` / :class:`VectorField`
values with the public operations, and the batched torch kernels
(``*_t`` functions, shapes ``(N, C, D, H, W)``) that the networks and losses
differentiate through.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import DomainError, ShapeError, ValidationError

Spacing = tuple[float, float, float]


def _as_spacing(spacing) -> Spacing:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
        raise ValidationError(f"spacing must be three positive reals, got {spacing!r}")
    return sp  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class Volume:
    """Scalar intensity grid with physical voxel spacing (mm)."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ShapeError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]

    def tensor(self, dtype=torch.float32, device=None) -> torch.Tensor:
        """Return the data as a ``(1, 1, D, H, W)`` tensor."""
        return torch.as_tensor(np.array(self.data), dtype=dtype, device=device)[None, None]

    @classmethod
    def from_tensor(cls, t: torch.Tensor, spacing=(1.0, 1.0, 1.0)) -> "Volume":
        arr = t.detach().cpu().numpy().astype(np.float32)
        return cls(arr.reshape(arr.shape[-3:]), spacing)

    def with_data(self, data) -> "Volume":
        return Volume(data, self.spacing)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Displacement field, data shaped ``(3, D, H, W)`` holding ``(dx, dy, dz)``."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 4 or arr.shape[0] != 3 or min(arr.shape[1:]) < 1:
            raise ShapeError(f"field data must have shape (3, D, H, W), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[1:])  # type: ignore[return-value]

    def tensor(self, dtype=torch.float32, device=None) -> torch.Tensor:
        return torch.as_tensor(np.array(self.data), dtype=dtype, device=device)[None]

    @classmethod
    def from_tensor(cls, t: torch.Tensor, spacing=(1.0, 1.0, 1.0)) -> "VectorField":
        arr = t.detach().cpu().numpy().astype(np.float32)
        return cls(arr.reshape(arr.shape[-4:]), spacing)

    @classmethod
    def zeros(cls, dims: Sequence[int], spacing=(1.0, 1.0, 1.0)) -> "VectorField":
        return cls(np.zeros((3, *dims), np.float32), spacing)

    @classmethod
    def uniform(cls, dims: Sequence[int], vector: Sequence[float], spacing=(1.0, 1.0, 1.0)):
        """Constant field; ``vector`` is ``(dx, dy, dz)``."""
        data = np.empty((3, *dims), np.float32)
        data[:] = np.asarray(vector, np.float32)[:, None, None, None]
        return cls(data, spacing)


def check_phase(t: float, *, open_interval: bool = False) -> float:
    """Validate a normalised phase (0 = ED, 1 = ES)."""
    t = float(t)
    if not np.isfinite(t) or t < 0.0 or t > 1.0:
        raise ValidationError(f"phase must lie in [0, 1], got {t}")
    if open_interval and t in (0.0, 1.0):
        raise DomainError(f"phase must lie strictly inside (0, 1), got {t}")
    return t


def normalize(volume: Volume) -> Volume:
    """Min-max rescale to [0, 1]; a constant volume maps to all zeros."""
    d = volume.data.astype(np.float64)
    lo, hi = d.min(), d.max()
    if hi - lo <= 0:
        return volume.with_data(np.zeros_like(volume.data))
    out = ((d - lo) / (hi - lo)).astype(np.float32)
    return volume.with_data(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# torch kernels

def identity_grid(dims, dtype=torch.float32, device=None):
    """Voxel coordinates ``(z, y, x)``, each shaped ``(D, H, W)``."""
    axes = [torch.arange(n, dtype=dtype, device=device) for n in dims]
    return torch.meshgrid(*axes, indexing="ij")


def sample_trilinear(src: torch.Tensor, pz, py, px) -> torch.Tensor:
    """Sample ``src`` (N, C, D, H, W) at voxel positions shaped (N, D', H', W').

    Positions are clamped into the grid, so out-of-range samples take the
    value of the nearest boundary voxel and carry no position gradient.
    NaN positions yield NaN samples rather than an indexing error.
    """
    n, c, d, h, w = src.shape
    pz = pz.clamp(0, d - 1)
    py = py.clamp(0, h - 1)
    px = px.clamp(0, w - 1)
    z0 = pz.detach().floor()
    y0 = py.detach().floor()
    x0 = px.detach().floor()
    wz, wy, wx = pz - z0, py - y0, px - x0
    z0, y0, x0 = (torch.nan_to_num(a).long() for a in (z0, y0, x0))
    z1 = (z0 + 1).clamp(max=d - 1)
    y1 = (y0 + 1).clamp(max=h - 1)
    x1 = (x0 + 1).clamp(max=w - 1)

    flat = src.reshape(n, c, d * h * w)
    out_shape = pz.shape[1:]

    def gather(zi, yi, xi):
        idx = ((zi * h + yi) * w + xi).reshape(n, 1, -1).expand(n, c, -1)
        return flat.gather(2, idx).reshape(n, c, *out_shape)

    wz, wy, wx = wz[:, None], wy[:, None], wx[:, None]
    c00 = gather(z0, y0, x0) * (1 - wx) + gather(z0, y0, x1) * wx
    c01 = gather(z0, y1, x0) * (1 - wx) + gather(z0, y1, x1) * wx
    c10 = gather(z1, y0, x0) * (1 - wx) + gather(z1, y0, x1) * wx
    c11 = gather(z1, y1, x0) * (1 - wx) + gather(z1, y1, x1) * wx
    c0 = c00 * (1 - wy) + c01 * wy
    c1 = c10 * (1 - wy) + c11 * wy
    return c0 * (1 - wz) + c1 * wz


def warp_t(src: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """``out(v) = src(v + flow(v))`` for src (N, C, D, H, W), flow (N, 3, D, H, W)."""
    if src.shape[0] != flow.shape[0] or src.shape[2:] != flow.shape[2:] or flow.shape[1] != 3:
        raise ShapeError(f"cannot warp {tuple(src.shape)} by field {tuple(flow.shape)}")
    gz, gy, gx = identity_grid(src.shape[2:], dtype=flow.dtype, device=flow.device)
    px = gx + flow[:, 0]
    py = gy + flow[:, 1]
    pz = gz + flow[:, 2]
    return sample_trilinear(src, pz, py, px)


def gradient_t(flow: torch.Tensor) -> torch.Tensor:
    """Forward differences of (N, C, D, H, W) along z, y, x.

    Returns (N, 3, C, D, H, W); the trailing slab along each axis is zero.
    """
    dz = F.pad(flow[:, :, 1:] - flow[:, :, :-1], (0, 0, 0, 0, 0, 1))
    dy = F.pad(flow[:, :, :, 1:] - flow[:, :, :, :-1], (0, 0, 0, 1))
    dx = F.pad(flow[..., 1:] - flow[..., :-1], (0, 1))
    return torch.stack((dz, dy, dx), dim=1)


def resize_t(x: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Trilinear resampling between cell-centred grids (edge samples clamp)."""
    size = tuple(int(s) for s in size)
    if tuple(x.shape[2:]) == size:
        return x
    return F.interpolate(x, size=size, mode="trilinear", align_corners=False)


def resize_field_t(flow: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Resample a field and rescale each component into target-grid voxels."""
    d, h, w = flow.shape[2:]
    out = resize_t(flow, size)
    scale = torch.tensor([size[2] / w, size[1] / h, size[0] / d], dtype=flow.dtype, device=flow.device)
    return out * scale.view(1, 3, 1, 1, 1)


# ---------------------------------------------------------------------------
# public value-level operations

def _check_finite_field(field: VectorField):
    if not np.all(np.isfinite(field.data)):
        raise ValidationError("displacement field contains non-finite values")


def warp(volume: Volume, field: VectorField) -> Volume:
    """Trilinearly resample ``volume`` at ``v + field(v)``."""
    if volume.dims != field.dims:
        raise ShapeError(f"volume dims {volume.dims} != field dims {field.dims}")
    _check_finite_field(field)
    with torch.no_grad():
        out = warp_t(volume.tensor(), field.tensor())
    return Volume.from_tensor(out, volume.spacing)


def warp_field(field_a: VectorField, field_b: VectorField) -> VectorField:
    """Resample each component of ``field_a`` at ``v + field_b(v)``."""
    if field_a.dims != field_b.dims:
        raise ShapeError(f"field dims {field_a.dims} != {field_b.dims}")
    _check_finite_field(field_a)
    _check_finite_field(field_b)
    with torch.no_grad():
        out = warp_t(field_a.tensor(), field_b.tensor())
    return VectorField.from_tensor(out, field_a.spacing)


def spatial_gradient(field: VectorField) -> np.ndarray:
    """Forward-difference Jacobian stack shaped ``(3 axes z/y/x, 3 components, D, H, W)``."""
    if min(field.dims) < 2:
        raise ValidationError(f"gradient needs every extent >= 2, got {field.dims}")
    with torch.no_grad():
        g = gradient_t(field.tensor(dtype=torch.float64))
    return g[0].numpy()


def _target_dims(dims, factor) -> tuple[int, int, int]:
    f = np.broadcast_to(np.asarray(factor, dtype=np.float64), (3,))
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ValidationError(f"resampling factor must be positive, got {factor!r}")
    raw = np.asarray(dims, np.float64) * f
    out = np.rint(raw)
    if np.any(np.abs(raw - out) > 1e-6) or np.any(out < 1):
        raise ValidationError(f"factor {factor!r} does not map dims {tuple(dims)} to whole voxels")
    return tuple(int(v) for v in out)  # type: ignore[return-value]


def resample_volume(volume: Volume, factor) -> Volume:
    """Resample by ``factor`` (scalar or per-axis z/y/x); physical extent is kept."""
    size = _target_dims(volume.dims, factor)
    with torch.no_grad():
        out = resize_t(volume.tensor(dtype=torch.float64), size)
    spacing = tuple(s * n / m for s, n, m in zip(volume.spacing, volume.dims, size))
    return Volume(out[0, 0].numpy(), spacing)


def resample_field(field: VectorField, factor) -> VectorField:
    """Resample componentwise, scaling displacements by the per-axis factor."""
    size = _target_dims(field.dims, factor)
    _check_finite_field(field)
    with torch.no_grad():
        out = resize_field_t(field.tensor(dtype=torch.float64), size)
    spacing = tuple(s * n / m for s, n, m in zip(field.spacing, field.dims, size))
    return VectorField(out[0].numpy(), spacing)
