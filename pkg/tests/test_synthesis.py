import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svin.exceptions import ShapeError, ValidationError
from svin.grid import Volume, VectorField, warp_field
from svin.synthesis import (
    WeightMap,
    blend_linear,
    blend_weighted,
    consistent_intermediate_fields,
    intensity_blend,
    linear_intermediate_fields,
)

DIMS = (6, 7, 8)


@pytest.fixture
def fields(rng):
    return VectorField(rng.normal(size=(3, *DIMS))), VectorField(rng.normal(size=(3, *DIMS)))


@pytest.fixture
def volumes(rng):
    return Volume(rng.random(DIMS)), Volume(rng.random(DIMS))


class TestLinearFields:
    def test_endpoints(self, fields):
        fwd, bwd = fields
        a, b = linear_intermediate_fields(fwd, bwd, 0.0)
        assert np.all(a.data == 0) and np.array_equal(b.data, bwd.data)
        a, b = linear_intermediate_fields(fwd, bwd, 1.0)
        assert np.array_equal(a.data, fwd.data) and np.all(b.data == 0)

    def test_midpoint_uniform(self):
        a, b = linear_intermediate_fields(
            VectorField.uniform(DIMS, (2, 0, 0)), VectorField.uniform(DIMS, (-2, 0, 0)), 0.5
        )
        np.testing.assert_array_equal(a.data, VectorField.uniform(DIMS, (1, 0, 0)).data)
        np.testing.assert_array_equal(b.data, VectorField.uniform(DIMS, (-1, 0, 0)).data)

    @pytest.mark.parametrize("t", [-0.1, 1.5, float("nan")])
    def test_phase_out_of_range(self, fields, t):
        with pytest.raises(ValidationError):
            linear_intermediate_fields(*fields, t)


class TestConsistentFields:
    def test_t0(self, fields):
        fwd, bwd = fields
        a, b = consistent_intermediate_fields(fwd, bwd, 0.0)
        assert np.all(a.data == 0)
        np.testing.assert_allclose(b.data, -warp_field(fwd, fwd).data, atol=1e-6)

    def test_t1(self, fields):
        fwd, bwd = fields
        a, b = consistent_intermediate_fields(fwd, bwd, 1.0)
        np.testing.assert_allclose(a.data, -warp_field(bwd, bwd).data, rtol=1e-6, atol=1e-6)
        assert np.all(b.data == 0)

    def test_uniform_closed_form(self):
        u, w = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.2])
        fu, fw = VectorField.uniform(DIMS, u), VectorField.uniform(DIMS, w)
        a, b = consistent_intermediate_fields(fu, fw, 0.5)
        np.testing.assert_allclose(a.data, VectorField.uniform(DIMS, 0.25 * u - 0.25 * w).data, atol=1e-6)
        np.testing.assert_allclose(b.data, VectorField.uniform(DIMS, -0.25 * u + 0.25 * w).data, atol=1e-6)

    def test_continuity_at_endpoints(self, fields):
        fwd, bwd = fields
        a, _ = consistent_intermediate_fields(fwd, bwd, 1e-6)
        _, b = consistent_intermediate_fields(fwd, bwd, 1 - 1e-6)
        assert np.abs(a.data).max() < 1e-4 and np.abs(b.data).max() < 1e-4

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            consistent_intermediate_fields(VectorField.zeros((4, 4, 4)), VectorField.zeros((4, 4, 5)), 0.5)


class TestBlends:
    def test_linear_endpoints_exact(self, volumes):
        ed, es = volumes
        z = VectorField.zeros(DIMS)
        assert np.array_equal(blend_linear(ed, es, z, z, 0.0).data, ed.data)
        assert np.array_equal(blend_linear(ed, es, z, z, 1.0).data, es.data)

    def test_linear_midpoint_mean(self, volumes):
        ed, es = volumes
        z = VectorField.zeros(DIMS)
        np.testing.assert_allclose(blend_linear(ed, es, z, z, 0.5).data, (ed.data + es.data) / 2, atol=1e-7)

    def test_weighted_full_ed_weight(self, volumes):
        ed, es = volumes
        z = VectorField.zeros(DIMS)
        out = blend_weighted(ed, es, z, z, 0.3, WeightMap.constant(DIMS, 1.0))
        np.testing.assert_allclose(out.data, ed.data, rtol=1e-6)

    @pytest.mark.parametrize("t", [0.2, 0.5, 0.9])
    def test_weighted_half_reduces_to_linear(self, volumes, t):
        ed, es = volumes
        z = VectorField.zeros(DIMS)
        out = blend_weighted(ed, es, z, z, t, WeightMap.constant(DIMS, 0.5))
        np.testing.assert_allclose(out.data, blend_linear(ed, es, z, z, t).data, atol=1e-6)

    def test_unnormalised_weights_darken(self):
        ones = Volume(np.ones(DIMS))
        z = VectorField.zeros(DIMS)
        out = blend_weighted(ones, ones, z, z, 0.5, WeightMap.constant(DIMS, 0.5), normalize=False)
        np.testing.assert_allclose(out.data, 0.5)

    def test_weighted_endpoints_exact(self, volumes, rng):
        ed, es = volumes
        z = VectorField.zeros(DIMS)
        g = WeightMap(rng.uniform(0.1, 0.9, DIMS))
        np.testing.assert_allclose(blend_weighted(ed, es, z, z, 0.0, g).data, ed.data, rtol=1e-6)
        np.testing.assert_allclose(blend_weighted(ed, es, z, z, 1.0, g).data, es.data, rtol=1e-6)

    def test_depends_on_gamma_through_ratio_only(self, volumes, rng, fields):
        ed, es = volumes
        fwd, bwd = fields
        g = rng.uniform(0.05, 0.95, DIMS)
        t = 0.4
        out = blend_weighted(ed, es, fwd, bwd, t, WeightMap(g)).data
        # swap roles: blend ES->ED at 1 - t with the complement map gives the same weights
        swapped = blend_weighted(es, ed, bwd, fwd, 1 - t, WeightMap(1 - g)).data
        np.testing.assert_allclose(out, swapped, atol=1e-5)

    def test_gamma_validated(self):
        with pytest.raises(ValidationError):
            WeightMap(np.full(DIMS, 1.2))
        assert np.array_equal(WeightMap.constant(DIMS, 0.3).gamma_es, np.full(DIMS, np.float32(1) - np.float32(0.3)))

    def test_intensity_blend(self, volumes):
        ed, es = volumes
        np.testing.assert_allclose(intensity_blend(ed, es, 0.25).data, 0.75 * ed.data + 0.25 * es.data, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 1), scale=st.floats(0, 50), seed=st.integers(0, 1000))
def test_all_outputs_finite(t, scale, seed):
    r = np.random.default_rng(seed)
    dims = (4, 4, 4)
    fwd = VectorField(r.normal(size=(3, *dims)) * scale)
    bwd = VectorField(r.normal(size=(3, *dims)) * scale)
    ed, es = Volume(r.random(dims)), Volume(r.random(dims))
    g = WeightMap(r.random(dims))
    for a, b in (linear_intermediate_fields(fwd, bwd, t), consistent_intermediate_fields(fwd, bwd, t)):
        assert np.all(np.isfinite(a.data)) and np.all(np.isfinite(b.data))
        assert np.all(np.isfinite(blend_linear(ed, es, a, b, t).data))
        for norm in (True, False):
            assert np.all(np.isfinite(blend_weighted(ed, es, a, b, t, g, norm).data))
