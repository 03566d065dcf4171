"""Three-level coarse-to-fine pyramids (level 1 coarsest, level 3 full size)."""
from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

from .exceptions import DomainError, ValidationError
from .grid import Volume, VectorField, resize_field_t

N_LEVELS = 3


def check_divisible(dims: Sequence[int]):
    bad = [n for n in dims if n % 4]
    if bad:
        pad = [(-n) % 4 for n in dims]
        raise ValidationError(
            f"dims {tuple(dims)} must be divisible by 4 for a {N_LEVELS}-level pyramid; "
            f"pad by {tuple(pad)} voxels (z, y, x)"
        )


def level_dims(dims: Sequence[int]) -> list[tuple[int, ...]]:
    """Grid sizes for levels 1..3, coarsest first."""
    return [tuple(-(-n // 2 ** (N_LEVELS - 1 - i)) for n in dims) for i in range(N_LEVELS)]


def pyramid_t(x: torch.Tensor) -> list[torch.Tensor]:
    """Average-pool ``x`` (N, C, D, H, W) into ``[level1, level2, level3]``."""
    check_divisible(x.shape[2:])
    levels = [x]
    for _ in range(N_LEVELS - 1):
        levels.append(F.avg_pool3d(levels[-1], 2))
    return levels[::-1]


def upsample_field_t(flow: torch.Tensor) -> torch.Tensor:
    """Double the grid of a field and its displacement magnitudes."""
    return resize_field_t(flow, [2 * n for n in flow.shape[2:]])


def build_pyramid(v: Volume) -> list[Volume]:
    """Levels ``[coarsest, middle, v]`` built by 2x2x2 average pooling."""
    with torch.no_grad():
        levels = pyramid_t(v.tensor(dtype=torch.float64))
    out = []
    for i, lv in enumerate(levels):
        f = 2 ** (N_LEVELS - 1 - i)
        out.append(Volume(lv[0, 0].numpy(), tuple(s * f for s in v.spacing)))
    out[-1] = v
    return out


def upsample_field_to_next(field: VectorField, level: int) -> VectorField:
    """Carry a level-``level`` field up to level ``level + 1``."""
    if level not in (1, 2):
        raise DomainError(f"only levels 1 and 2 have a finer level, got {level}")
    with torch.no_grad():
        out = upsample_field_t(field.tensor(dtype=torch.float64))
    return VectorField(out[0].numpy(), tuple(s / 2 for s in field.spacing))
