import numpy as np
import pytest
import torch

from oracles import param_central_difference, rel_err
from svin.exceptions import DomainError, ShapeError, ValidationError
from svin.grid import Volume, VectorField
from svin.interp import (
    InterpConfig,
    InterpNet,
    PhaseRegressor,
    infer_sequence,
    interp_forward,
    interp_losses,
    linear_blend_sequence,
    motion_pair,
    regression_forward,
    train_interp,
)
from svin.losses import LossWeights
from svin.motion import MotionNet
from svin.phantom import PhantomSpec, phantom_dataset
from svin.pyramid import pyramid_t
from svin.synthesis import intensity_blend

SPEC16 = PhantomSpec(dims=(16, 16, 16), radii=(3.5, 3.5, 3.0), thickness=1.5)


@pytest.fixture(scope="module")
def tiny_data():
    return phantom_dataset(2, SPEC16, seed=0)


def randomise(module, scale, seed=0):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * scale)


def inputs(rng, n=1, dims=(8, 8, 8), dtype=torch.float32):
    t = lambda c: torch.as_tensor(rng.random((n, c, *dims)), dtype=dtype)  # noqa: E731
    return t(1), t(1), (t(3) - 0.5), (t(3) - 0.5)


def test_zero_init_output_is_intensity_blend(rng):
    net = InterpNet()
    ed, es = Volume(rng.random((8, 8, 8))), Volume(rng.random((8, 8, 8)))
    z = VectorField.zeros((8, 8, 8))
    out = interp_forward(net, ed, es, z, z, 0.3)
    np.testing.assert_allclose(out.volume.data, intensity_blend(ed, es, 0.3).data, atol=1e-6)
    assert out.t_pred == 0.0
    assert np.all(out.gamma.gamma_ed == 0.5)
    assert [v.dims for v in out.volumes] == [(2, 2, 2), (4, 4, 4), (8, 8, 8)]


def test_zero_init_fields_equal_scaffold(rng):
    net = InterpNet()
    ed, es, fwd, bwd = inputs(rng)
    with torch.no_grad():
        out = net(ed, es, fwd, bwd, 0.25)
        lin = InterpNet(InterpConfig(scaffold="linear"))(ed, es, fwd, bwd, 0.25)
    torch.testing.assert_close(lin.ed_fields[-1], 0.25 * fwd)
    torch.testing.assert_close(lin.es_fields[-1], 0.75 * bwd)
    assert not torch.allclose(out.ed_fields[-1], lin.ed_fields[-1])


def test_phase_domain(rng):
    net = InterpNet()
    ed = Volume(rng.random((8, 8, 8)))
    z = VectorField.zeros((8, 8, 8))
    for t in (0.0, 1.0):
        with pytest.raises(DomainError):
            interp_forward(net, ed, ed, z, z, t)
    with pytest.raises(ValidationError):
        interp_forward(net, ed, ed, z, z, -0.1)
    with pytest.raises(ShapeError):
        interp_forward(net, ed, ed, z, VectorField.zeros((8, 8, 4)), 0.5)


def test_regressor_shapes_and_zero_init(rng):
    reg = PhaseRegressor()
    d = torch.rand(3, 3, 8, 8, 8)
    assert torch.all(reg(d, d) == 0) and reg(d, d).shape == (3,)
    with pytest.raises(ShapeError):
        reg(d, d[:, :, :4])
    net = InterpNet()
    z = VectorField.zeros((8, 8, 8))
    assert regression_forward(net, z, z) == 0.0


@pytest.mark.parametrize("which", ["heads.2.weight", "heads.1.bias", "backbone.enc0.0.0.weight", "regressor.head.weight", "regressor.features.0.weight"])
def test_parameter_gradients_match_finite_differences(which, rng):
    torch.manual_seed(0)
    cfg = InterpConfig(weights=LossWeights(similar=1.0, regression=1.0, consistency=0.1))
    net = InterpNet(cfg).double()
    for head in net.heads:
        randomise(head, 0.05)
    randomise(net.regressor.head, 0.5, seed=1)
    ed, es, fwd, bwd = inputs(rng, n=2, dtype=torch.float64)
    t = torch.tensor([0.25, 0.6], dtype=torch.float64)
    truth = pyramid_t(torch.as_tensor(rng.random((2, 1, 8, 8, 8))))

    def loss():
        return interp_losses(net(ed, es, fwd, bwd, t), truth, t, cfg.weights, cfg.reduction)[0]

    param = dict(net.named_parameters())[which]
    net.zero_grad()
    loss().backward()
    idx = rng.choice(param.numel(), size=min(6, param.numel()), replace=False)
    numeric = param_central_difference(loss, param, idx)
    assert rel_err(param.grad.view(-1)[idx].numpy(), numeric) < 1e-3


def test_interp_losses_use_weights(rng):
    net = InterpNet()
    ed, es, fwd, bwd = inputs(rng)
    truth = pyramid_t(torch.rand(1, 1, 8, 8, 8))
    with torch.no_grad():
        out = net(ed, es, fwd, bwd, 0.5)
        total, sim, reg, cons = interp_losses(out, truth, torch.tensor([0.5]), LossWeights(), "mean")
    assert float(reg) == pytest.approx(0.5)  # |0 - 0.5|
    assert float(total) == pytest.approx(500 * float(sim) + float(reg) + 50 * float(cons), rel=1e-6)


def test_motion_stays_frozen(tiny_data):
    torch.manual_seed(0)
    motion = MotionNet()
    randomise(motion.heads, 0.01)
    before = [p.detach().clone() for p in motion.parameters()]
    train_interp(tiny_data, motion, InterpConfig(lr=1e-3, steps=3))
    for a, p in zip(before, motion.parameters()):
        assert torch.equal(a, p)
        assert p.grad is None


def test_training_is_bitwise_reproducible(tiny_data):
    motion = MotionNet()
    cfg = InterpConfig(lr=1e-3, steps=3, seed=5)
    h1 = train_interp(tiny_data, motion, cfg).history
    h2 = train_interp(tiny_data, motion, cfg).history
    assert [r["loss"] for r in h1] == [r["loss"] for r in h2]


def test_precomputed_fields_match(tiny_data):
    motion = MotionNet()
    randomise(motion.heads, 0.01)
    cfg = InterpConfig(lr=1e-3, steps=2)
    pairs = []
    for s in tiny_data:
        f, b = motion_pair(motion, s.ed.tensor(), s.es.tensor())
        pairs.append((VectorField.from_tensor(f), VectorField.from_tensor(b)))
    a = train_interp(tiny_data, motion, cfg).history
    b = train_interp(tiny_data, motion, cfg, fields=pairs).history
    assert [r["loss"] for r in a] == [r["loss"] for r in b]
    with pytest.raises(ValidationError):
        train_interp(tiny_data, motion, cfg, fields=pairs[:1])


def test_infer_sequence_phases(tiny_data):
    s = tiny_data[0]
    seq = infer_sequence(MotionNet(), InterpNet(), s.ed, s.es, 3)
    assert [t for t, _ in seq] == [0.25, 0.5, 0.75]
    np.testing.assert_allclose(seq[1][1].data, intensity_blend(s.ed, s.es, 0.5).data, atol=1e-6)
    with pytest.raises(ValidationError):
        infer_sequence(MotionNet(), InterpNet(), s.ed, s.es, 0)


def test_linear_blend_with_zero_motion(tiny_data):
    s = tiny_data[0]
    seq = linear_blend_sequence(MotionNet(), s.ed, s.es, [0.25])
    np.testing.assert_allclose(seq[0][1].data, intensity_blend(s.ed, s.es, 0.25).data, atol=1e-6)


def test_config_validation():
    with pytest.raises(ValidationError) as err:
        InterpConfig(lr=0, scaffold="cubic")
    assert "lr" in str(err.value) and "scaffold" in str(err.value)
    with pytest.raises(ValidationError, match="regression"):
        InterpConfig(weights={"regression": -1})
    assert InterpConfig(weights={"regression": 0}).weights.regression == 0
