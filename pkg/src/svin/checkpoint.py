"""Checkpoint archives: a JSON manifest plus raw float32 parameter blocks.

The archive is a zip file (stored, fixed timestamps, so identical runs give
identical bytes) containing ``manifest.json`` and one ``blocks/<name>.f32``
member per tensor, little-endian float32 in C order.  Block names are
``model/<parameter>`` and ``optim/<index>/<buffer>`` for the Adam moments.
"""
from __future__ import annotations

import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .exceptions import FormatError
from .interp import InterpConfig, InterpNet
from .losses import LossWeights
from .motion import MotionConfig, MotionNet, TrainState

FORMAT = "svin-checkpoint/1"
KINDS = {"motion": (MotionNet, MotionConfig), "interp": (InterpNet, InterpConfig)}
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _add(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, data)


def _block(t: torch.Tensor) -> bytes:
    return np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f4").tobytes()


def save_checkpoint(path, kind: str, state: TrainState, config, extra: dict | None = None):
    if kind not in KINDS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    blocks = {}
    for name, t in state.model.state_dict().items():
        blocks[f"model/{name}"] = t
    opt = state.optimizer.state_dict()
    steps = {}
    for idx, buf in opt["state"].items():
        for key, t in buf.items():
            if key == "step":
                steps[str(idx)] = float(t)
            else:
                blocks[f"optim/{idx}/{key}"] = t
    manifest = {
        "format": FORMAT,
        "kind": kind,
        "config": asdict(config),
        "step": state.step,
        "seed": config.seed,
        "history": state.history,
        "optimizer": {"param_groups": opt["param_groups"], "steps": steps},
        "blocks": {name: list(t.shape) for name, t in blocks.items()},
        **(extra or {}),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        _add(zf, "manifest.json", json.dumps(manifest, indent=2).encode("utf-8"))
        for name, t in blocks.items():
            _add(zf, f"blocks/{name}.f32", _block(t))


def read_manifest(path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            return json.loads(zf.read("manifest.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path} is not a checkpoint archive: {exc}") from exc


def _config_from(kind, cfg: dict):
    cfg = dict(cfg)
    if kind == "interp" and isinstance(cfg.get("weights"), dict):
        cfg["weights"] = LossWeights(**cfg["weights"])
    return KINDS[kind][1](**cfg)


def load_checkpoint(path, kind: str | None = None, device="cpu"):
    """Returns ``(state, config, manifest)``; the model is put in eval mode."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    manifest = read_manifest(path)
    if manifest.get("format") != FORMAT:
        raise FormatError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    if kind is not None and manifest["kind"] != kind:
        raise FormatError(f"{path} is a {manifest['kind']!r} checkpoint, expected {kind!r}")
    kind = manifest["kind"]
    config = _config_from(kind, manifest["config"])
    model_cls = KINDS[kind][0]

    with zipfile.ZipFile(path) as zf:
        def block(name):
            shape = manifest["blocks"][name]
            arr = np.frombuffer(zf.read(f"blocks/{name}.f32"), dtype="<f4").astype(np.float32)
            return torch.from_numpy(arr.reshape(shape))

        model = model_cls(config)
        model.load_state_dict({n[6:]: block(n) for n in manifest["blocks"] if n.startswith("model/")})
        model.to(device)
        opt = torch.optim.Adam(model.parameters(), lr=config.lr)
        groups = manifest["optimizer"]["param_groups"]
        for g in groups:
            if "betas" in g:
                g["betas"] = tuple(g["betas"])
        state = {}
        for idx, step in manifest["optimizer"]["steps"].items():
            buf = {"step": torch.tensor(step)}
            for key in ("exp_avg", "exp_avg_sq"):
                name = f"optim/{idx}/{key}"
                if name in manifest["blocks"]:
                    buf[key] = block(name).to(device)
            state[int(idx)] = buf
        opt.load_state_dict({"state": state, "param_groups": groups})
    model.eval()
    ts = TrainState(model, opt, step=manifest["step"], history=list(manifest["history"]))
    return ts, config, manifest
