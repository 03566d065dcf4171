"""The ``.svv`` volume format and the on-disk dataset layout.

File layout::

    b"SVV1"                      4-byte magic
    uint32 little-endian         header length in bytes
    UTF-8 JSON header            {"dims": [D, H, W], "spacing": [sz, sy, sx],
                                  "dtype": "f32le", "kind": "volume" | "field" | "mask"}
    payload                      float32 little-endian, C order (x fastest);
                                 fields store the dx, dy, dz blocks one after another

A dataset is a directory holding ``dataset.json`` and one subdirectory per
sample with ``ed.svv``, ``es.svv``, ``t_<phase>.svv`` for each intermediate
and a ``sample.json`` manifest; wall masks and true displacement fields are
stored alongside as ``mask_*.svv`` / ``field_*.svv`` when available.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import FormatError, HeaderError, MagicError, PayloadSizeError, TruncatedError
from .grid import Volume, VectorField
from .phantom import PhaseSample

MAGIC = b"SVV1"
KINDS = ("volume", "field", "mask")


def _encode(data: np.ndarray, spacing, kind: str) -> bytes:
    dims = list(data.shape[-3:])
    header = json.dumps(
        {"dims": dims, "spacing": [float(s) for s in spacing], "dtype": "f32le", "kind": kind},
        separators=(",", ":"),
    ).encode("utf-8")
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def _decode(raw: bytes):
    if raw[:4] != MAGIC:
        raise MagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 8:
        raise TruncatedError("file ends inside the header-length field")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise TruncatedError(f"file ends inside the {hlen}-byte header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
        dims = [int(n) for n in header["dims"]]
        spacing = [float(s) for s in header["spacing"]]
        kind = header["kind"]
        dtype = header["dtype"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"malformed header: {exc}") from exc
    if dtype != "f32le":
        raise HeaderError(f"unsupported dtype {dtype!r}")
    if kind not in KINDS:
        raise HeaderError(f"unknown kind {kind!r}")
    if len(dims) != 3 or min(dims) < 1 or len(spacing) != 3:
        raise HeaderError(f"bad dims {dims} or spacing {spacing}")
    payload = raw[8 + hlen :]
    if len(payload) % 4:
        raise TruncatedError(f"payload of {len(payload)} bytes ends mid-value")
    expected = int(np.prod(dims)) * (3 if kind == "field" else 1)
    if len(payload) // 4 != expected:
        raise PayloadSizeError(
            f"header dims {dims} ({kind}) need {expected} values, payload has {len(payload) // 4}"
        )
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    shape = (3, *dims) if kind == "field" else tuple(dims)
    return header, arr.reshape(shape)


def read_svv(path) -> tuple[dict, np.ndarray]:
    return _decode(Path(path).read_bytes())


def save_volume(v: Volume, path, kind: str = "volume"):
    if kind not in ("volume", "mask"):
        raise ValueError(f"volume kind must be 'volume' or 'mask', got {kind!r}")
    Path(path).write_bytes(_encode(v.data, v.spacing, kind))


def load_volume(path) -> Volume:
    header, arr = read_svv(path)
    if header["kind"] == "field":
        raise HeaderError(f"{path} holds a displacement field, not a volume")
    return Volume(arr, tuple(header["spacing"]))


def save_field(f: VectorField, path):
    Path(path).write_bytes(_encode(f.data, f.spacing, "field"))


def load_field(path) -> VectorField:
    header, arr = read_svv(path)
    if header["kind"] != "field":
        raise HeaderError(f"{path} holds a {header['kind']}, not a displacement field")
    return VectorField(arr, tuple(header["spacing"]))


def phase_tag(t: float) -> str:
    tag = f"{t:.2f}"
    if abs(float(tag) - t) > 1e-9:
        tag = f"{t:.6f}".rstrip("0")
    return tag


def phase_filename(t: float, prefix: str = "t_") -> str:
    return f"{prefix}{phase_tag(t)}.svv"


def write_sample(sample: PhaseSample, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_volume(sample.ed, d / "ed.svv")
    save_volume(sample.es, d / "es.svv")
    inter = []
    for t, v in sample.intermediates:
        name = phase_filename(t)
        save_volume(v, d / name)
        inter.append({"t": t, "file": name})
    masks, fields = {}, {}
    for t, m in sample.masks.items():
        name = _end_name("mask", t) or phase_filename(t, "mask_t_")
        save_volume(m, d / name, kind="mask")
        masks[repr(float(t))] = name
    for t, f in sample.true_fields.items():
        name = _end_name("field", t) or phase_filename(t, "field_t_")
        save_field(f, d / name)
        fields[repr(float(t))] = name
    manifest = {
        "name": sample.name,
        "ed": "ed.svv",
        "es": "es.svv",
        "phases": [t for t, _ in sample.intermediates],
        "intermediates": inter,
        "masks": masks,
        "fields": fields,
    }
    (d / "sample.json").write_text(json.dumps(manifest, indent=2))


def _end_name(prefix, t):
    if t == 0.0:
        return f"{prefix}_ed.svv"
    if t == 1.0:
        return f"{prefix}_es.svv"
    return None


def read_sample(directory) -> PhaseSample:
    d = Path(directory)
    try:
        manifest = json.loads((d / "sample.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{d} has no sample.json") from exc
    inter = [(float(e["t"]), load_volume(d / e["file"])) for e in manifest["intermediates"]]
    masks = {float(t): load_volume(d / name) for t, name in manifest.get("masks", {}).items()}
    fields = {float(t): load_field(d / name) for t, name in manifest.get("fields", {}).items()}
    return PhaseSample(
        ed=load_volume(d / manifest.get("ed", "ed.svv")),
        es=load_volume(d / manifest.get("es", "es.svv")),
        intermediates=inter,
        masks=masks,
        true_fields=fields,
        name=manifest.get("name", d.name),
    )


def write_dataset(samples: Iterable[PhaseSample], root, extra: dict | None = None) -> list[str]:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for s in samples:
        write_sample(s, root / s.name)
        names.append(s.name)
    (root / "dataset.json").write_text(json.dumps({"samples": names, **(extra or {})}, indent=2))
    return names


def read_dataset(root) -> list[PhaseSample]:
    root = Path(root)
    manifest = root / "dataset.json"
    if manifest.exists():
        names = json.loads(manifest.read_text())["samples"]
    else:
        names = sorted(p.name for p in root.iterdir() if (p / "sample.json").exists())
    return [read_sample(root / n) for n in names]
