"""Run configuration: one JSON document with sections, validated as a whole.

Precedence is flag > file > default.  Validation collects the complaints of
every section before raising, so a bad config is reported in one go.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import torch

from .exceptions import ValidationError
from .interp import InterpConfig
from .losses import LossWeights
from .motion import MotionConfig
from .phantom import PhantomSpec


@dataclass
class PhantomConfig:
    """Command-line view of the phantom generator; geometry scales with ``size``."""

    samples: int = 10
    size: int = 32
    phases: int = 5
    alpha: float = 0.3
    p: float = 2.0
    twist: float = 0.3
    noise: float = 0.01

    def __post_init__(self):
        errors = []
        if self.samples < 1:
            errors.append(f"samples must be >= 1, got {self.samples}")
        if self.size < 16:
            errors.append(f"size must be >= 16, got {self.size}")
        if self.phases < 3:
            errors.append(f"phases must be >= 3, got {self.phases}")
        if not 0 <= self.alpha < 1:
            errors.append(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.p > 0:
            errors.append(f"p must be > 0, got {self.p}")
        if not self.noise >= 0:
            errors.append(f"noise must be >= 0, got {self.noise}")
        if errors:
            raise ValidationError("; ".join(errors))

    def spec(self) -> PhantomSpec:
        # geometry scales with the free interior so the default holds at 32^3
        k = (self.size - 6) / 26
        return PhantomSpec(
            dims=(self.size,) * 3,
            radii=(12.0 * k, 10.0 * k, 8.0 * k),
            thickness=4.0 * k,
            alpha=self.alpha,
            p=self.p,
            twist=self.twist,
            noise=self.noise,
        )


SECTIONS = {"phantom": PhantomConfig, "motion": MotionConfig, "interp": InterpConfig}


@dataclass
class RunConfig:
    dataset: str | None = None
    motion_checkpoint: str | None = None
    interp_checkpoint: str | None = None
    out: str = "runs"
    seed: int = 0
    device: str = "cpu"
    count: int = 3
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    motion: MotionConfig = field(default_factory=MotionConfig)
    interp: InterpConfig = field(default_factory=InterpConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def torch_device(self) -> torch.device:
        return torch.device(resolve_device(self.device))

    def check_paths(self, *names: str):
        """Raise if any of the named path fields is unset or missing on disk."""
        missing = []
        for name in names:
            value = getattr(self, name)
            if value is None:
                missing.append(f"{name} is required")
            elif not Path(value).exists():
                missing.append(f"{name} does not exist: {value}")
        if missing:
            raise ValidationError("; ".join(missing))


def resolve_device(name: str) -> str:
    if name == "auto":
        return "cuda" if torch.cuda.is_available() else "cpu"
    return name


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def build_config(doc: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Validate ``defaults <- doc <- overrides`` into a :class:`RunConfig`."""
    raw = _merge(RunConfig().to_dict(), doc or {})
    raw = _merge(raw, overrides or {})
    errors = []
    top = {f.name for f in fields(RunConfig)}
    for key in sorted(set(raw) - top):
        errors.append(f"unknown config key {key!r}")
    sections = {}
    seed = raw.get("seed", 0)
    for name, cls in SECTIONS.items():
        sec = dict(raw.get(name) or {})
        known = {f.name for f in fields(cls)}
        for key in sorted(set(sec) - known):
            errors.append(f"unknown config key '{name}.{key}'")
        sec = {k: v for k, v in sec.items() if k in known}
        if "seed" in known:
            sec["seed"] = seed
        if name == "interp" and isinstance(sec.get("weights"), dict):
            try:
                sec["weights"] = LossWeights(**sec["weights"])
            except (ValidationError, TypeError) as exc:
                errors.append(f"interp.weights: {exc}")
                sec.pop("weights")
        try:
            sections[name] = cls(**sec)
        except (ValidationError, TypeError) as exc:
            errors.append(f"{name}: {exc}")
    count = raw.get("count", 3)
    if not isinstance(count, int) or count < 1:
        errors.append(f"count must be an integer >= 1, got {count!r}")
    device = raw.get("device", "cpu")
    if device not in ("cpu", "auto") and not str(device).startswith("cuda"):
        errors.append(f"device must be 'cpu', 'cuda[:n]' or 'auto', got {device!r}")
    elif str(device).startswith("cuda") and not torch.cuda.is_available():
        errors.append(f"device {device!r} requested but CUDA is not available")
    if errors:
        raise ValidationError("invalid configuration: " + "; ".join(errors))
    plain = {k: raw[k] for k in top if k not in SECTIONS}
    return replace(RunConfig(), **plain, **sections)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    doc = None
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
    return build_config(doc, overrides)
