"""Command-line entry point: ``svin <verb> [options]``.

Verbs: ``phantom``, ``train-motion``, ``train-interp``, ``interpolate`` and
``evaluate``.  Global flags (``--config``, ``--seed``, ``--out``,
``--device``, ``--dump-config``) go before the verb.  Every output lands
under ``--out``; cached motion fields go to ``$SVIN_CACHE_DIR`` when it is
set, else to ``<out>/cache``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .exceptions import SVINError, ValidationError
from .fileio import (
    load_field,
    load_volume,
    phase_filename,
    read_dataset,
    read_sample,
    save_field,
    save_volume,
    write_dataset,
)
from .grid import Volume, VectorField
from .interp import infer_sequence, linear_blend_sequence, motion_pair, train_interp
from .motion import train_motion
from .phantom import phantom_dataset
from .synthesis import intensity_blend

log = logging.getLogger("svin")

DEFAULT_THRESHOLD = 0.625  # halfway between the phantom's pool and wall intensities


# ---------------------------------------------------------------- helpers


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cache_dir(cfg: RunConfig) -> Path:
    env = os.environ.get("SVIN_CACHE_DIR")
    d = Path(env) if env else Path(cfg.out) / "cache"
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_history(history: list[dict], path: Path):
    if not history:
        return
    keys = list(history[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for rec in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})


def plot_history(history: list[dict], path: Path, keys: tuple[str, ...]):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not history:
        return
    steps = [r["step"] for r in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in keys:
        ax.plot(steps, [r[k] for r in history], label=k, lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def montage(volumes: list[tuple[str, Volume]], path: Path):
    """Mid-slices along each axis, one column per volume."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(3, len(volumes), figsize=(2.2 * len(volumes), 6.6), squeeze=False)
    for col, (title, v) in enumerate(volumes):
        d, h, w = v.dims
        slices = (v.data[d // 2], v.data[:, h // 2], v.data[:, :, w // 2])
        for row, img in enumerate(slices):
            ax = axes[row][col]
            ax.imshow(img, cmap="gray", vmin=0, vmax=1, origin="lower")
            ax.set_xticks([])
            ax.set_yticks([])
        axes[0][col].set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=80)
    plt.close(fig)


def _digest(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return h.hexdigest()[:24]


def cached_motion_pair(motion, ed: Volume, es: Volume, key: str, cache: Path, device):
    """Full-resolution (forward, backward) fields, read from or written to ``cache``."""
    tag = _digest(key.encode(), ed.data.tobytes(), es.data.tobytes())
    f_path, b_path = cache / f"{tag}_fwd.svv", cache / f"{tag}_bwd.svv"
    if f_path.exists() and b_path.exists():
        return load_field(f_path), load_field(b_path)
    p = next(motion.parameters())
    fwd, bwd = motion_pair(motion, ed.tensor(p.dtype, device), es.tensor(p.dtype, device))
    pair = VectorField.from_tensor(fwd, ed.spacing), VectorField.from_tensor(bwd, ed.spacing)
    save_field(pair[0], f_path)
    save_field(pair[1], b_path)
    return pair


def _checkpoint_key(path) -> str:
    return _digest(Path(path).read_bytes())


def _train_loop(cfg: RunConfig, kind: str, section, resume, run_steps):
    """Shared bookkeeping: resume, step budget, checkpoint and history files."""
    device = cfg.torch_device()
    if resume:
        state, saved, _ = load_checkpoint(resume, kind=kind, device=device)
        if saved.width != section.width:
            raise ValidationError(f"checkpoint width {saved.width} != configured width {section.width}")
        state.model.train()
    else:
        state = None
    remaining = section.steps - (state.step if state else 0)
    if remaining < 0:
        raise ValidationError(f"checkpoint is already at step {state.step}, beyond steps={section.steps}")
    state = run_steps(state, remaining, device)
    return state


def _finish_training(cfg: RunConfig, kind: str, state, section, keys, extra=None):
    out = _out_dir(cfg)
    ckpt = out / f"{kind}.ckpt"
    save_checkpoint(ckpt, kind, state, section, extra)
    write_history(state.history, out / f"{kind}_history.csv")
    plot_history(state.history, out / f"{kind}_loss.png", keys)
    last = state.history[-1]["loss"] if state.history else float("nan")
    print(f"{kind}: step {state.step}, final loss {last:.6g}, checkpoint {ckpt}")
    return ckpt


# ---------------------------------------------------------------- verbs


def cmd_phantom(cfg: RunConfig, args) -> int:
    pc = cfg.phantom
    samples = phantom_dataset(pc.samples, pc.spec(), n_phases=pc.phases, seed=cfg.seed)
    out = _out_dir(cfg)
    names = write_dataset(samples, out, extra={"seed": cfg.seed, "phantom": asdict(pc)})
    print(f"wrote {len(names)} samples to {out}")
    return 0


def cmd_train_motion(cfg: RunConfig, args) -> int:
    cfg.check_paths("dataset")
    data = read_dataset(cfg.dataset)

    def run(state, n, device):
        return train_motion(data, cfg.motion, state=state, steps=n, device=device)

    state = _train_loop(cfg, "motion", cfg.motion, args.resume, run)
    _finish_training(cfg, "motion", state, cfg.motion, ("loss", "similarity", "smoothness"))
    return 0


def cmd_train_interp(cfg: RunConfig, args) -> int:
    cfg.check_paths("dataset", "motion_checkpoint")
    data = read_dataset(cfg.dataset)
    device = cfg.torch_device()
    motion, _, _ = load_checkpoint(cfg.motion_checkpoint, kind="motion", device=device)
    key = _checkpoint_key(cfg.motion_checkpoint)
    cache = cache_dir(cfg)
    pairs = [cached_motion_pair(motion.model, s.ed, s.es, key, cache, device) for s in data]

    def run(state, n, dev):
        return train_interp(data, motion.model, cfg.interp, state=state, steps=n, device=dev, fields=pairs)

    state = _train_loop(cfg, "interp", cfg.interp, args.resume, run)
    _finish_training(
        cfg, "interp", state, cfg.interp, ("loss", "similar", "consistency"),
        extra={"motion_checkpoint": key},
    )
    return 0


def _sequence(cfg: RunConfig, method: str, ed: Volume, es: Volume, models):
    phases = [k / (cfg.count + 1) for k in range(1, cfg.count + 1)]
    if method == "blend":
        return [(t, intensity_blend(ed, es, t)) for t in phases]
    if method == "linear":
        return linear_blend_sequence(models["motion"], ed, es, phases)
    return infer_sequence(models["motion"], models["interp"], ed, es, cfg.count)


def _load_models(cfg: RunConfig, method: str) -> dict:
    device = cfg.torch_device()
    models = {}
    if method in ("svin", "linear"):
        if cfg.motion_checkpoint is None:
            raise ValidationError(f"method {method!r} needs --motion")
        models["motion"] = load_checkpoint(cfg.motion_checkpoint, kind="motion", device=device)[0].model
    if method == "svin":
        if cfg.interp_checkpoint is None:
            raise ValidationError("method 'svin' needs --interp")
        models["interp"] = load_checkpoint(cfg.interp_checkpoint, kind="interp", device=device)[0].model
    return models


def _write_sequence(seq, ed: Volume, es: Volume, d: Path, images: bool):
    d.mkdir(parents=True, exist_ok=True)
    for t, v in seq:
        save_volume(v, d / phase_filename(t))
        if images:
            montage([("ED", ed), (f"t={t:.2f}", v), ("ES", es)], d / phase_filename(t).replace(".svv", ".png"))


def cmd_interpolate(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    if args.data:
        cfg.dataset = args.data
        cfg.check_paths("dataset")
        models = _load_models(cfg, args.method)
        samples = read_dataset(cfg.dataset)
        for s in samples:
            seq = _sequence(cfg, args.method, s.ed, s.es, models)
            _write_sequence(seq, s.ed, s.es, out / s.name, not args.no_images)
        print(f"interpolated {len(samples)} samples x {cfg.count} phases into {out}")
        return 0
    if not (args.ed and args.es):
        raise ValidationError("interpolate needs either --data or both --ed and --es")
    ed, es = load_volume(args.ed), load_volume(args.es)
    if ed.dims != es.dims:
        raise ValidationError(f"ED dims {ed.dims} do not match ES dims {es.dims}")
    models = _load_models(cfg, args.method)
    seq = _sequence(cfg, args.method, ed, es, models)
    _write_sequence(seq, ed, es, out, not args.no_images)
    print(f"wrote {len(seq)} volumes to {out}")
    return 0


def _reference_samples(ref: Path):
    if (ref / "sample.json").exists():
        return [read_sample(ref)], True
    return read_dataset(ref), False


def cmd_evaluate(cfg: RunConfig, args) -> int:
    pred_root, ref_root = Path(args.pred), Path(args.ref)
    for p in (pred_root, ref_root):
        if not p.is_dir():
            raise FileNotFoundError(f"directory not found: {p}")
    refs, flat = _reference_samples(ref_root)
    missing, pairs = [], []
    for s in refs:
        d = pred_root if flat else pred_root / s.name
        for t, v in s.intermediates:
            f = d / phase_filename(t)
            if f.exists():
                pairs.append((s, t, v, f))
            else:
                missing.append(f"{s.name} ({phase_filename(t)})")
    if not flat:
        known = {s.name for s in refs}
        extra = sorted(p.name for p in pred_root.iterdir() if p.is_dir() and p.name not in known and p.name != "cache")
        missing += [f"{name} (no reference sample)" for name in extra]
    if missing:
        raise ValidationError("unpaired samples: " + ", ".join(missing))

    report = metrics.MetricReport(method=args.method)
    for s, t, ref, f in pairs:
        pred = load_volume(f)
        row = metrics.evaluate_pair(pred, ref)
        if args.masks:
            if t not in s.masks:
                raise ValidationError(f"sample {s.name} has no reference mask at t={t}")
            mask_file = f.with_name(phase_filename(t, "mask_t_"))
            pred_mask = load_volume(mask_file).data if mask_file.exists() else (pred.data >= args.threshold)
            row["dice"] = metrics.dice(pred_mask.astype(np.float32), s.masks[t].data)
        report.add(s.name, t, row)
    out = _out_dir(cfg)
    report.write_json(out / "report.json")
    report.write_csv(out / "report.csv")
    print(report.table())
    return 0


COMMANDS = {
    "phantom": cmd_phantom,
    "train-motion": cmd_train_motion,
    "train-interp": cmd_train_interp,
    "interpolate": cmd_interpolate,
    "evaluate": cmd_evaluate,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svin", description="Volumetric interpolation between ED and ES phases.")
    parser.add_argument("--config", help="JSON run config; flags override its fields")
    parser.add_argument("--seed", type=int, help="seed for data generation and training")
    parser.add_argument("--out", help="output directory (default: runs)")
    parser.add_argument("--device", help="cpu, cuda[:n] or auto")
    parser.add_argument("--dump-config", action="store_true", help="print the resolved config as JSON and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a synthetic phantom dataset")
    p.add_argument("--samples", type=int)
    p.add_argument("--size", type=int, help="cube edge in voxels")
    p.add_argument("--phases", type=int, help="phases from ED to ES inclusive")
    p.add_argument("--alpha", type=float, help="ES contraction fraction")
    p.add_argument("--p", type=float, help="time-law exponent")
    p.add_argument("--twist", type=float, help="ES twist in radians")
    p.add_argument("--noise", type=float, help="Gaussian noise sigma")

    for name, helptext in (("train-motion", "fit the motion network"), ("train-interp", "fit the interpolation network")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", help="dataset directory")
        p.add_argument("--steps", type=int, help="total optimisation steps (resumed runs count from the checkpoint)")
        p.add_argument("--lr", type=float)
        p.add_argument("--width", type=int)
        p.add_argument("--resume", help="checkpoint to continue from")
        if name == "train-interp":
            p.add_argument("--motion", help="motion checkpoint")
            p.add_argument("--lambda-s", type=float, dest="lambda_s", help="similarity weight")
            p.add_argument("--lambda-r", type=float, dest="lambda_r", help="regression weight")
            p.add_argument("--lambda-g", type=float, dest="lambda_g", help="consistency weight")
            p.add_argument("--scaffold", choices=("consistent", "linear"))

    p = sub.add_parser("interpolate", help="synthesise intermediate volumes")
    p.add_argument("--ed")
    p.add_argument("--es")
    p.add_argument("--data", help="dataset directory; writes one subdirectory per sample")
    p.add_argument("--count", type=int)
    p.add_argument("--motion", help="motion checkpoint")
    p.add_argument("--interp", help="interpolation checkpoint")
    p.add_argument("--method", choices=("svin", "linear", "blend"), default="svin")
    p.add_argument("--no-images", action="store_true", help="skip the PNG montages")

    p = sub.add_parser("evaluate", help="score predictions against a reference dataset")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--masks", action="store_true", help="also report Dice against the reference masks")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="intensity above which a predicted voxel counts as wall")
    p.add_argument("--method", default="svin", help="label stored in the report")
    return parser


def overrides_from(args) -> dict:
    o: dict = {}
    for key in ("seed", "out", "device"):
        if getattr(args, key, None) is not None:
            o[key] = getattr(args, key)
    g = lambda k: getattr(args, k, None)  # noqa: E731
    if args.command == "phantom":
        sec = {k: g(k) for k in ("samples", "size", "phases", "alpha", "p", "twist", "noise") if g(k) is not None}
        if sec:
            o["phantom"] = sec
    if args.command in ("train-motion", "train-interp"):
        name = "motion" if args.command == "train-motion" else "interp"
        sec = {k: g(k) for k in ("steps", "lr", "width", "scaffold") if g(k) is not None}
        weights = {w: g(a) for a, w in (("lambda_s", "similar"), ("lambda_r", "regression"), ("lambda_g", "consistency"))
                   if g(a) is not None}
        if weights:
            sec["weights"] = weights
        if sec:
            o[name] = sec
        if g("data"):
            o["dataset"] = g("data")
    if g("motion"):
        o["motion_checkpoint"] = g("motion")
    if g("interp"):
        o["interp_checkpoint"] = g("interp")
    if g("count") is not None:
        o["count"] = g("count")
    return o


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, overrides_from(args))
        if args.dump_config:
            print(cfg.dumps())
            return 0
        _out_dir(cfg)
        (Path(cfg.out) / f"config.{args.command}.json").write_text(cfg.dumps())
        return COMMANDS[args.command](cfg, args)
    except (SVINError, FileNotFoundError, PermissionError, NotADirectoryError) as exc:
        print(f"svin {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
