"""Closed-form intermediate fields and warped-blend intermediate volumes.

Given a forward field ``fwd`` (ED -> ES) and backward field ``bwd``
(ES -> ED) the intermediate fields for phase ``t`` come either from linear
scaling or from the bidirectional-consistency form with self-warped terms,
which is implemented exactly as printed (signs included)::

    ed_t = t (1 - t) fwd - t^2 warp(bwd | bwd)
    es_t = -(1 - t)^2 warp(fwd | fwd) + t (1 - t) bwd
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import ShapeError, ValidationError
from .grid import Volume, VectorField, check_phase, warp_t

EPS = 1e-8


@dataclass(frozen=True, eq=False)
class WeightMap:
    """Per-voxel ED blend weight; the ES weight is its complement."""

    gamma_ed: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma_ed, dtype=np.float32)
        if g.ndim != 3:
            raise ShapeError(f"weight map must be 3D, got shape {g.shape}")
        if not np.all(np.isfinite(g)) or g.min() < 0 or g.max() > 1:
            raise ValidationError("weight map values must lie in [0, 1]")
        g.setflags(write=False)
        object.__setattr__(self, "gamma_ed", g)

    @property
    def gamma_es(self) -> np.ndarray:
        return 1.0 - self.gamma_ed

    @classmethod
    def constant(cls, dims, value: float) -> "WeightMap":
        return cls(np.full(dims, value, np.float32))


# -- tensor versions (differentiable; t may be a python float)

def linear_fields_t(fwd, bwd, t):
    return t * fwd, (1 - t) * bwd


def consistent_fields_t(fwd, bwd, t):
    ed_t = t * (1 - t) * fwd - t * t * warp_t(bwd, bwd)
    es_t = -(1 - t) ** 2 * warp_t(fwd, fwd) + t * (1 - t) * bwd
    return ed_t, es_t


def blend_weighted_t(i_ed, i_es, ed_t, es_t, t, gamma_ed, normalize=True):
    a = (1 - t) * gamma_ed
    b = t * (1 - gamma_ed)
    num = a * warp_t(i_ed, ed_t) + b * warp_t(i_es, es_t)
    if not normalize:
        return num
    return num / (a + b + EPS)


# -- value-level API

def _check_pair(a: VectorField, b: VectorField):
    if a.dims != b.dims:
        raise ShapeError(f"field dims {a.dims} != {b.dims}")


def _fields_out(ed_t, es_t, spacing):
    return VectorField.from_tensor(ed_t, spacing), VectorField.from_tensor(es_t, spacing)


def linear_intermediate_fields(fwd: VectorField, bwd: VectorField, t: float):
    """``(t * fwd, (1 - t) * bwd)``."""
    _check_pair(fwd, bwd)
    t = check_phase(t)
    return VectorField(t * fwd.data, fwd.spacing), VectorField((1 - t) * bwd.data, bwd.spacing)


def consistent_intermediate_fields(fwd: VectorField, bwd: VectorField, t: float):
    _check_pair(fwd, bwd)
    t = check_phase(t)
    with torch.no_grad():
        ed_t, es_t = consistent_fields_t(fwd.tensor(torch.float64), bwd.tensor(torch.float64), t)
    return _fields_out(ed_t, es_t, fwd.spacing)


def _check_blend_inputs(i_ed, i_es, ed_t, es_t):
    dims = {i_ed.dims, i_es.dims, ed_t.dims, es_t.dims}
    if len(dims) != 1:
        raise ShapeError(f"blend inputs disagree in dims: {sorted(dims)}")


def blend_linear(i_ed: Volume, i_es: Volume, ed_t: VectorField, es_t: VectorField, t: float) -> Volume:
    """``(1 - t) warp(I_ED | ed_t) + t warp(I_ES | es_t)``."""
    _check_blend_inputs(i_ed, i_es, ed_t, es_t)
    t = check_phase(t)
    with torch.no_grad():
        out = (1 - t) * warp_t(i_ed.tensor(), ed_t.tensor()) + t * warp_t(i_es.tensor(), es_t.tensor())
    return Volume.from_tensor(out, i_ed.spacing)


def blend_weighted(
    i_ed: Volume,
    i_es: Volume,
    ed_t: VectorField,
    es_t: VectorField,
    t: float,
    gamma: WeightMap,
    normalize: bool = True,
) -> Volume:
    """Gamma-weighted blend of the two warped candidates.

    With ``normalize=False`` the weights ``(1 - t) g`` and ``t (1 - g)`` are
    used as-is and do not sum to one; with ``normalize=True`` the result is
    divided by their sum (plus ``1e-8``).
    """
    _check_blend_inputs(i_ed, i_es, ed_t, es_t)
    if gamma.gamma_ed.shape != i_ed.dims:
        raise ShapeError(f"weight map dims {gamma.gamma_ed.shape} != volume dims {i_ed.dims}")
    t = check_phase(t)
    g = torch.as_tensor(np.array(gamma.gamma_ed))[None, None]
    with torch.no_grad():
        out = blend_weighted_t(i_ed.tensor(), i_es.tensor(), ed_t.tensor(), es_t.tensor(), t, g, normalize)
    return Volume.from_tensor(out, i_ed.spacing)


def intensity_blend(i_ed: Volume, i_es: Volume, t: float) -> Volume:
    """Motion-free baseline ``(1 - t) I_ED + t I_ES``."""
    if i_ed.dims != i_es.dims:
        raise ShapeError(f"volume dims {i_ed.dims} != {i_es.dims}")
    t = check_phase(t)
    return i_ed.with_data((1 - t) * i_ed.data.astype(np.float64) + t * i_es.data.astype(np.float64))
