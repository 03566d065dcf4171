import json
import math

import numpy as np
import pytest

from oracles import dice_oracle, mse_oracle, ssim_oracle
from svin import metrics
from svin.exceptions import ShapeError, ValidationError
from svin.grid import Volume


class TestScalarMetrics:
    def test_mse(self, rng):
        a = rng.random((8, 8, 8))
        assert metrics.mse(a, a) == 0
        assert metrics.mse(np.zeros((2, 2, 2)), np.ones((2, 2, 2))) == 1
        b = rng.random((8, 8, 8))
        assert metrics.mse(a, b) == pytest.approx(mse_oracle(a, b), abs=1e-12)
        assert metrics.mse(Volume(a), Volume(b)) == pytest.approx(metrics.mse(a, b), rel=1e-6)

    def test_nrmse(self, rng):
        ref = rng.random((4, 4, 4))
        ref.flat[0], ref.flat[1] = 0.0, 1.0
        assert metrics.nrmse(ref, ref) == 0
        assert metrics.nrmse(ref + 0.2, ref) == pytest.approx(0.2)
        with pytest.raises(ValidationError):
            metrics.nrmse(ref, np.ones_like(ref))

    def test_psnr(self):
        ref = np.zeros((4, 4, 4))
        assert metrics.psnr(ref + 0.1, ref) == pytest.approx(20.0, abs=1e-12)
        assert metrics.psnr(ref, ref) == math.inf
        assert metrics.psnr_from_mse(0.01) == 20.0
        assert metrics.psnr_from_mse(0.0) == math.inf
        with pytest.raises(ValidationError):
            metrics.psnr_from_mse(-1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            metrics.mse(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


class TestSSIM:
    def test_identical(self, rng):
        a = rng.random((8, 9, 10))
        assert metrics.ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_binary_pattern(self):
        z, y, x = np.indices((8, 8, 8))
        ref = ((x // 2 + y + z) % 2).astype(float)
        got = metrics.ssim(1 - ref, ref)
        assert got == pytest.approx(ssim_oracle(1 - ref, ref), abs=1e-9)
        assert got < 0

    def test_constant_offset(self):
        a = np.full((8, 8, 8), 0.2)
        c = 0.3
        expected = ssim_oracle(a + c, a)
        # constant windows: only the luminance term survives
        closed = (2 * 0.2 * 0.5 + 1e-4) / (0.04 + 0.25 + 1e-4)
        assert expected == pytest.approx(closed)
        assert metrics.ssim(a + c, a) == pytest.approx(expected, abs=1e-12)

    def test_random_against_oracle(self, rng):
        a, b = rng.random((8, 8, 9)), rng.random((8, 8, 9))
        assert metrics.ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-9)

    def test_slicewise(self, rng):
        a, b = rng.random((3, 8, 8)), rng.random((3, 8, 8))
        c1, c2 = 1e-4, 9e-4
        vals = []
        for z in range(3):
            for y in range(2):
                for x in range(2):
                    pa, pb = a[z, y : y + 7, x : x + 7].ravel(), b[z, y : y + 7, x : x + 7].ravel()
                    ma, mb = pa.mean(), pb.mean()
                    va, vb = pa.var(), pb.var()
                    cov = ((pa - ma) * (pb - mb)).mean()
                    vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
        assert metrics.ssim(a, b, slicewise=True) == pytest.approx(np.mean(vals), abs=1e-9)

    def test_too_small(self):
        with pytest.raises(ValidationError):
            metrics.ssim(np.zeros((6, 8, 8)), np.zeros((6, 8, 8)))


class TestDice:
    def test_cases(self):
        a = np.zeros((4, 4, 4))
        a[:2] = 1
        b = np.zeros((4, 4, 4))
        b[2:] = 1
        c = np.zeros((4, 4, 4))
        c[1:3] = 1
        assert metrics.dice(a, a) == 1
        assert metrics.dice(a, b) == 0
        assert metrics.dice(a, c) == pytest.approx(0.5)
        half = np.zeros((4, 4, 4))
        half[:2, :2] = 1
        other = np.zeros((4, 4, 4))
        other[:2, 1:3] = 1
        assert metrics.dice(half, other) == pytest.approx(0.5)
        assert metrics.dice(np.zeros(3), np.zeros(3)) == 1.0

    def test_two_thirds(self):
        a = np.zeros((1, 1, 6))
        b = np.zeros((1, 1, 6))
        a[..., 0:3] = 1
        b[..., 1:4] = 1
        assert metrics.dice(a, b) == pytest.approx(2 / 3)

    def test_label_and_symmetry(self, rng):
        a = rng.integers(0, 3, (6, 6, 6))
        b = rng.integers(0, 3, (6, 6, 6))
        assert metrics.dice(a, b, label=2) == pytest.approx(dice_oracle(a, b, 2))
        assert metrics.dice(a, b, 2) == metrics.dice(b, a, 2)


def test_permutation_consistency(rng):
    a, b = rng.random((8, 8, 8)), rng.random((8, 8, 8))
    perm = rng.permutation(a.size)
    pa, pb = a.ravel()[perm].reshape(a.shape), b.ravel()[perm].reshape(b.shape)
    for fn in (metrics.mse, metrics.nrmse, metrics.psnr):
        assert fn(pa, pb) == pytest.approx(fn(a, b), rel=1e-12)


def test_report_serialisation(tmp_path):
    rep = metrics.MetricReport(method="svin")
    for s in ("a", "b"):
        for ph, m in ((0.25, 0.01), (0.5, 0.004)):
            rep.add(s, ph, {"mse": m, "psnr": 10 * math.log10(1 / m), "ssim": 0.9, "nrmse": 0.1})
    assert list(rep.per_phase()) == [0.25, 0.5]
    assert rep.per_phase()[0.25]["psnr"] == pytest.approx(20.0)
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert len(doc["rows"]) == 4 and len(doc["per_phase"]) == 2
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "method,sample,phase,metric,value"
    assert len(lines) == 1 + 4 * 4
    assert rep.table().splitlines()[1].startswith("0.250")
