"""Image-quality and overlap metrics for interpolated volumes."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .exceptions import ShapeError, ValidationError

METRICS = ("mse", "nrmse", "psnr", "ssim", "dice")


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _pair(a, b):
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def nrmse(pred, ref) -> float:
    """Root mean square error divided by the intensity range of ``ref``."""
    p, r = _pair(pred, ref)
    rng = r.max() - r.min()
    if rng <= 0:
        raise ValidationError("reference volume is constant; NRMSE is undefined")
    return float(np.sqrt(np.mean((p - r) ** 2)) / rng)


def psnr_from_mse(m: float, peak: float = 1.0) -> float:
    if m < 0:
        raise ValidationError(f"mse must be >= 0, got {m}")
    if m == 0:
        return math.inf
    return float(10 * math.log10(peak ** 2 / m))


def psnr(pred, ref, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / mse)`` in dB; identical inputs give ``inf``."""
    return psnr_from_mse(mse(pred, ref), peak)


def ssim(pred, ref, peak: float = 1.0, window: int = 7, slicewise: bool = False) -> float:
    """Mean SSIM over all fully-contained uniform windows.

    Native 3D windows by default; ``slicewise=True`` uses 2D windows in each
    z-slice instead.  Local statistics use population (biased) moments.
    """
    a, b = _pair(pred, ref)
    axes = (1, 2) if slicewise else (0, 1, 2)
    if any(a.shape[i] < window for i in axes):
        raise ValidationError(f"ssim needs every windowed extent >= {window}, got {a.shape}")
    size = (1, window, window) if slicewise else window
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2

    def local_mean(x):
        return uniform_filter(x, size=size, mode="reflect")

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a ** 2
    var_b = local_mean(b * b) - mu_b ** 2
    cov = local_mean(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    r = window // 2
    crop = tuple(slice(r, n - r) if i in axes else slice(None) for i, n in enumerate(a.shape))
    return float(np.mean(s[crop]))


def dice(a, b, label=1) -> float:
    """Overlap of the voxels equal to ``label``; two empty masks score 1."""
    a, b = _pair(a, b)
    ma, mb = a == label, b == label
    denom = ma.sum() + mb.sum()
    if denom == 0:
        return 1.0
    return float(2 * np.logical_and(ma, mb).sum() / denom)


def evaluate_pair(pred, ref, pred_mask=None, ref_mask=None, peak: float = 1.0) -> dict:
    row = {
        "mse": mse(pred, ref),
        "nrmse": nrmse(pred, ref),
        "psnr": psnr(pred, ref, peak),
        "ssim": ssim(pred, ref, peak),
    }
    if pred_mask is not None and ref_mask is not None:
        row["dice"] = dice(pred_mask, ref_mask)
    return row


def _mean(values):
    """Mean of the finite values; all-infinite input (perfect PSNR) stays inf."""
    finite = [v for v in values if math.isfinite(v)]
    if finite:
        return float(np.mean(finite))
    return math.inf if values and all(v == math.inf for v in values) else math.nan


@dataclass
class MetricReport:
    """Rows of per-sample, per-phase metrics."""

    rows: list[dict] = field(default_factory=list)
    method: str = ""

    def add(self, sample: str, phase: float, values: dict):
        self.rows.append({"sample": sample, "phase": float(phase), **values})

    def metrics(self) -> list[str]:
        return [m for m in METRICS if any(m in r for r in self.rows)]

    def per_phase(self) -> dict[float, dict]:
        phases = sorted({r["phase"] for r in self.rows})
        out = {}
        for ph in phases:
            rows = [r for r in self.rows if r["phase"] == ph]
            out[ph] = {m: _mean([r[m] for r in rows if m in r]) for m in self.metrics()}
        return out

    def aggregate(self) -> dict:
        return {m: _mean([r[m] for r in self.rows if m in r]) for m in self.metrics()}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rows": self.rows,
            "per_phase": [{"phase": ph, **vals} for ph, vals in self.per_phase().items()],
            "aggregate": self.aggregate(),
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "sample", "phase", "metric", "value"])
            for r in self.rows:
                for m in self.metrics():
                    if m in r:
                        w.writerow([self.method, r["sample"], f"{r['phase']:.4f}", m, repr(r[m])])

    def table(self) -> str:
        """Per-phase summary, one line per phase."""
        ms = self.metrics()
        lines = ["phase   " + "".join(f"{m:>10}" for m in ms)]
        for ph, vals in self.per_phase().items():
            lines.append(f"{ph:<8.3f}" + "".join(f"{vals[m]:>10.4f}" for m in ms))
        return "\n".join(lines)

