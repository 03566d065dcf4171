"""Synthetic contracting-and-twisting ellipsoidal shell sequences.

Each sequence starts from a smooth ellipsoidal shell (a crude left-ventricle
stand-in: bright wall, dimmer blood pool, dark background).  The ES phase is
the ED image pulled back through the exact inverse of a contraction about the
centre by ``1 - alpha`` combined with an in-plane rotation of ``twist``
radians about the z (long) axis.  Intermediate displacements are that ES
displacement scaled by ``s(t) = t ** p``, so ``p != 1`` gives the non-linear
time course that linear interpolation cannot follow.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import ValidationError
from .grid import Volume, VectorField, normalize, resample_volume, warp

WALL, POOL, BACKGROUND = 0.9, 0.35, 0.05
EDGE_WIDTH = 0.5  # voxels; logistic edge of the shell surfaces
MARGIN = 2


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (32, 32, 32)
    radii: tuple[float, float, float] = (12.0, 10.0, 8.0)  # outer (z, y, x)
    thickness: float = 4.0
    center: tuple[float, float, float] | None = None  # defaults to the grid centre
    alpha: float = 0.3
    p: float = 2.0
    twist: float = 0.3
    noise: float = 0.01
    seed: int = 0
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def resolved_center(self) -> np.ndarray:
        if self.center is None:
            return (np.asarray(self.dims, np.float64) - 1) / 2
        return np.asarray(self.center, np.float64)

    def validate(self):
        c = self.resolved_center()
        r = np.asarray(self.radii, np.float64)
        dims = np.asarray(self.dims)
        if np.any(c - r < MARGIN) or np.any(c + r > dims - 1 - MARGIN):
            raise ValidationError(
                f"shell with centre {tuple(np.round(c, 2).tolist())} and radii {tuple(np.round(r, 2).tolist())} "
                f"does not fit in {tuple(dims.tolist())} "
                f"with a {MARGIN}-voxel margin"
            )
        if not 0 < self.thickness < r.min():
            raise ValidationError(f"thickness must lie in (0, {r.min()}), got {self.thickness}")
        if not 0 <= self.alpha < 1:
            raise ValidationError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.p <= 0:
            raise ValidationError(f"time-law exponent must be positive, got {self.p}")
        if self.noise < 0:
            raise ValidationError(f"noise must be nonnegative, got {self.noise}")

    def time_law(self, t):
        return np.asarray(t, np.float64) ** self.p


@dataclass(eq=False)
class PhaseSample:
    """One ED-to-ES sequence with its ground truth."""

    ed: Volume
    es: Volume
    intermediates: list[tuple[float, Volume]]
    masks: dict[float, Volume] = field(default_factory=dict)
    true_fields: dict[float, VectorField] = field(default_factory=dict)
    name: str = "sample"

    def __post_init__(self):
        ts = [t for t, _ in self.intermediates]
        if any(not 0 < t < 1 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError(f"intermediate phases must increase strictly inside (0, 1): {ts}")
        dims = {self.ed.dims, self.es.dims, *(v.dims for _, v in self.intermediates)}
        if len(dims) != 1:
            raise ValidationError(f"all volumes of a sample must share dims, got {sorted(dims)}")

    @property
    def phases(self) -> list[float]:
        return [t for t, _ in self.intermediates]


def _grid(dims):
    return np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")


def _signed_distance(q, radii):
    """Approximate signed distance to an ellipsoid, measured along the ray from its centre."""
    qz, qy, qx = q
    r = np.sqrt((qz / radii[0]) ** 2 + (qy / radii[1]) ** 2 + (qx / radii[2]) ** 2)
    norm = np.sqrt(qz ** 2 + qy ** 2 + qx ** 2)
    return norm * (1 - 1 / np.maximum(r, 1e-12))


def _shell(q, spec: PhantomSpec):
    outer = np.asarray(spec.radii, np.float64)
    inner = outer - spec.thickness
    return _signed_distance(q, outer), _signed_distance(q, inner)


def shell_image(spec: PhantomSpec) -> np.ndarray:
    q = [g - c for g, c in zip(_grid(spec.dims), spec.resolved_center())]
    d_out, d_in = _shell(q, spec)
    m_out = 1 / (1 + np.exp(d_out / EDGE_WIDTH))
    m_in = 1 / (1 + np.exp(d_in / EDGE_WIDTH))
    return BACKGROUND + (WALL - BACKGROUND) * m_out + (POOL - WALL) * m_in


def es_displacement(spec: PhantomSpec) -> np.ndarray:
    """Exact ES displacement ``(dx, dy, dz)`` shaped (3, D, H, W)."""
    gz, gy, gx = _grid(spec.dims)
    cz, cy, cx = spec.resolved_center()
    qz, qy, qx = gz - cz, gy - cy, gx - cx
    k = 1.0 / (1.0 - spec.alpha)
    cos, sin = np.cos(spec.twist), np.sin(spec.twist)
    dx = k * (cos * qx + sin * qy) - qx
    dy = k * (-sin * qx + cos * qy) - qy
    dz = k * qz - qz
    return np.stack([dx, dy, dz])


def shell_mask_at(spec: PhantomSpec, displacement: np.ndarray) -> np.ndarray:
    """Wall label of the deformed phantom, evaluated analytically."""
    gz, gy, gx = _grid(spec.dims)
    cz, cy, cx = spec.resolved_center()
    q = (gz + displacement[2] - cz, gy + displacement[1] - cy, gx + displacement[0] - cx)
    d_out, d_in = _shell(q, spec)
    return ((d_out <= 0) & (d_in > 0)).astype(np.float32)


def generate_phantom(spec: PhantomSpec, n_phases: int = 5, name: str = "sample") -> PhaseSample:
    """Sequence sampled at ``n_phases`` evenly spaced phases from ED (t=0) to ES (t=1)."""
    spec.validate()
    if n_phases < 3:
        raise ValidationError(f"need at least 3 phases for one intermediate, got {n_phases}")
    rng = np.random.default_rng(spec.seed)
    clean_ed = Volume(shell_image(spec), spec.spacing)
    u_es = es_displacement(spec)

    ts = np.linspace(0.0, 1.0, n_phases)
    volumes, masks, fields = [], {}, {}
    for t in ts:
        u = (spec.time_law(t) * u_es).astype(np.float32)
        f = VectorField(u, spec.spacing)
        clean = clean_ed if t == 0 else warp(clean_ed, f)
        data = clean.data.astype(np.float64)
        if spec.noise > 0:
            data = data + rng.normal(0.0, spec.noise, size=data.shape)
        volumes.append(Volume(np.clip(data, 0.0, 1.0), spec.spacing))
        masks[float(t)] = Volume(shell_mask_at(spec, u), spec.spacing)
        fields[float(t)] = f
    return PhaseSample(
        ed=volumes[0],
        es=volumes[-1],
        intermediates=[(float(t), v) for t, v in zip(ts[1:-1], volumes[1:-1])],
        masks=masks,
        true_fields=fields,
        name=name,
    )


def phantom_dataset(n_samples: int, base: PhantomSpec | None = None, n_phases: int = 5, seed: int = 0):
    """Samples with jittered centre, radii, wall thickness and twist.

    Jitter amplitudes scale with the grid (one voxel at 32^3) and radii are
    clipped so every shell keeps its margin inside the grid.
    """
    base = base or PhantomSpec()
    base.validate()
    rng = np.random.default_rng(seed)
    k = min(base.dims) / 32
    dims = np.asarray(base.dims, np.float64)
    out = []
    for i in range(n_samples):
        c = base.resolved_center() + rng.uniform(-k, k, 3)
        r = np.asarray(base.radii) + rng.uniform(-k, k, 3)
        r = np.minimum(r, np.minimum(c - MARGIN, dims - 1 - MARGIN - c))
        thickness = min(base.thickness + rng.uniform(-0.5, 0.5) * k, r.min() - 1)
        spec = replace(
            base,
            center=tuple(c.tolist()),
            radii=tuple(r.tolist()),
            thickness=thickness,
            twist=base.twist * rng.uniform(0.6, 1.0),
            seed=int(rng.integers(2**31)),
        )
        out.append(generate_phantom(spec, n_phases, name=f"sample_{i:03d}"))
    return out


def _center_crop(data: np.ndarray, crop: Sequence[int]) -> np.ndarray:
    if any(c > n for c, n in zip(crop, data.shape)):
        raise ValidationError(f"crop {tuple(crop)} larger than volume dims {data.shape}")
    sl = tuple(slice((n - c) // 2, (n - c) // 2 + c) for c, n in zip(crop, data.shape))
    return data[sl]


def preprocess(
    v: Volume,
    target_dims: Sequence[int] | None = None,
    crop_dims: Sequence[int] | None = None,
    pad_axis_to: int | None = None,
) -> Volume:
    """Resample, centre-crop, zero-pad z symmetrically, then min-max normalise.

    Dims are ``(z, y, x)``.  Odd padding puts the extra slab at the end.
    """
    if target_dims is not None:
        factor = [t / n for t, n in zip(target_dims, v.dims)]
        if any(f <= 0 for f in factor):
            raise ValidationError(f"target dims must be positive, got {tuple(target_dims)}")
        v = resample_volume(v, factor)
    data = v.data
    if crop_dims is not None:
        data = _center_crop(data, crop_dims)
    if pad_axis_to is not None:
        extra = pad_axis_to - data.shape[0]
        if extra < 0:
            raise ValidationError(f"cannot pad z from {data.shape[0]} down to {pad_axis_to}")
        data = np.pad(data, ((extra // 2, extra - extra // 2), (0, 0), (0, 0)))
    return normalize(Volume(data, v.spacing))
