import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from svin.exceptions import HeaderError, MagicError, PayloadSizeError, TruncatedError
from svin.fileio import (
    load_field,
    load_volume,
    phase_filename,
    read_dataset,
    read_svv,
    save_field,
    save_volume,
    write_dataset,
)
from svin.grid import Volume, VectorField
from svin.phantom import PhantomSpec, phantom_dataset


def raw_file(header: dict, values) -> bytes:
    h = json.dumps(header).encode()
    return b"SVV1" + struct.pack("<I", len(h)) + h + np.asarray(values, "<f4").tobytes()


def test_round_trip_volume(tmp_path, rng):
    v = Volume(rng.normal(size=(3, 4, 5)), spacing=(2.5, 0.5, 0.75))
    save_volume(v, tmp_path / "a.svv")
    back = load_volume(tmp_path / "a.svv")
    assert np.array_equal(back.data.view(np.uint32), v.data.view(np.uint32))
    assert back.spacing == v.spacing


def test_round_trip_field(tmp_path, rng):
    f = VectorField(rng.normal(size=(3, 2, 3, 4)))
    save_field(f, tmp_path / "f.svv")
    assert np.array_equal(load_field(tmp_path / "f.svv").data, f.data)


def test_layout_is_x_fastest_little_endian(tmp_path):
    data = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4)
    save_volume(Volume(data), tmp_path / "v.svv")
    raw = (tmp_path / "v.svv").read_bytes()
    assert raw[:4] == b"SVV1"
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen])
    assert header == {"dims": [2, 3, 4], "spacing": [1.0, 1.0, 1.0], "dtype": "f32le", "kind": "volume"}
    payload = struct.unpack("<24f", raw[8 + hlen :])
    assert payload[1] == data[0, 0, 1] and payload[4] == data[0, 1, 0] and payload[12] == data[1, 0, 0]


def test_bad_magic(tmp_path):
    p = tmp_path / "x.svv"
    p.write_bytes(b"XXXX" + raw_file({"dims": [1, 1, 1], "spacing": [1, 1, 1], "dtype": "f32le", "kind": "volume"}, [0])[4:])
    with pytest.raises(MagicError):
        read_svv(p)


def test_payload_size_mismatch(tmp_path):
    p = tmp_path / "x.svv"
    p.write_bytes(raw_file({"dims": [2, 2, 2], "spacing": [1, 1, 1], "dtype": "f32le", "kind": "volume"}, np.zeros(7)))
    with pytest.raises(PayloadSizeError):
        read_svv(p)


def test_truncated(tmp_path):
    p = tmp_path / "x.svv"
    good = raw_file({"dims": [2, 2, 2], "spacing": [1, 1, 1], "dtype": "f32le", "kind": "volume"}, np.zeros(8))
    p.write_bytes(good[:-2])
    with pytest.raises(TruncatedError):
        read_svv(p)
    p.write_bytes(good[:12])
    with pytest.raises(TruncatedError):
        read_svv(p)


def test_bad_header(tmp_path):
    p = tmp_path / "x.svv"
    p.write_bytes(raw_file({"dims": [1, 1, 1], "spacing": [1, 1, 1], "dtype": "f64", "kind": "volume"}, [0]))
    with pytest.raises(HeaderError):
        read_svv(p)
    p.write_bytes(b"SVV1" + struct.pack("<I", 3) + b"{{{")
    with pytest.raises(HeaderError):
        read_svv(p)


def test_kind_checked(tmp_path):
    save_field(VectorField.zeros((2, 2, 2)), tmp_path / "f.svv")
    with pytest.raises(HeaderError):
        load_volume(tmp_path / "f.svv")


def test_phase_filenames():
    assert [phase_filename(t) for t in (0.25, 0.5, 0.75)] == ["t_0.25.svv", "t_0.50.svv", "t_0.75.svv"]
    assert phase_filename(1 / 8) == "t_0.125.svv"


def test_dataset_round_trip(tmp_path):
    spec = PhantomSpec(dims=(20, 20, 20), radii=(5.0, 4.5, 4.0), thickness=2.0)
    samples = phantom_dataset(2, spec, n_phases=5, seed=0)
    write_dataset(samples, tmp_path / "ds")
    sd = tmp_path / "ds" / "sample_000"
    names = sorted(p.name for p in sd.iterdir())
    assert {"ed.svv", "es.svv", "t_0.25.svv", "t_0.50.svv", "t_0.75.svv", "sample.json"} <= set(names)
    assert json.loads((sd / "sample.json").read_text())["phases"] == [0.25, 0.5, 0.75]
    back = read_dataset(tmp_path / "ds")
    for a, b in zip(samples, back):
        assert a.name == b.name and a.phases == b.phases
        assert np.array_equal(a.es.data, b.es.data)
        assert np.array_equal(a.masks[0.5].data, b.masks[0.5].data)
        assert np.array_equal(a.true_fields[1.0].data, b.true_fields[1.0].data)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(*[st.integers(1, 5)] * 3), elements=st.floats(width=32, allow_nan=False, allow_infinity=False)))
def test_round_trip_property(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("svv") / "v.svv"
    save_volume(Volume(data), p)
    assert np.array_equal(load_volume(p).data.view(np.uint32), data.view(np.uint32))
