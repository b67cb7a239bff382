import numpy as np
import pytest

from shockcast import conditioning as cond
from shockcast.autodiff import Tensor, ops
from shockcast.checkpoint import load_solver, read_checkpoint, save_module
from shockcast.exceptions import ConfigurationError, FormatError, ShapeError
from shockcast.models import CflNet, SolverNet

RNG = np.random.default_rng(0)


def randn(*shape):
    return RNG.standard_normal(shape)


def test_sinusoidal_features_are_bounded_and_distinct():
    f = cond.sinusoidal_features([-3.0, 0.0, 2.5])
    assert f.shape == (3, 64) and np.all(np.abs(f) <= 1)
    assert not np.allclose(f[0], f[2])
    np.testing.assert_array_equal(f[1, 32:], 1.0)


def test_cond_layer_norm_zero_heads_is_plain_norm_and_shift_sets_mean():
    z = Tensor(randn(2, 3, 4, 4))
    zeros = np.zeros((2, 3))
    assert np.array_equal(cond.cond_layer_norm(z, zeros, zeros).data, ops.group_norm(z, 1).data)
    b = randn(2, 3)
    out = cond.cond_layer_norm(z, zeros, b).data
    np.testing.assert_allclose(out.mean(axis=(1, 2, 3)), b.mean(axis=1), atol=1e-12)


def test_cond_layer_norm_distinct_steps_give_distinct_outputs():
    z = Tensor(np.repeat(randn(1, 3, 4, 4), 2, axis=0))
    w, c = randn(1, 3), randn(3)
    dt = np.array([[0.1], [0.7]])
    a = dt * w + c
    out = cond.cond_layer_norm(z, a, a).data
    assert np.max(np.abs(out[0] - out[1])) > 0


def test_spectral_identity_and_annihilation():
    z = Tensor(randn(2, 3, 8, 8))
    ones = np.ones((1, 3), complex)
    np.testing.assert_allclose(cond.spatial_spectral_condition(z, ones).data, z.data, atol=1e-13)
    killed = cond.spatial_spectral_condition(z, np.zeros((1, 3), complex)).data
    np.testing.assert_allclose(np.fft.rfft(killed, axis=-1)[..., :3], 0.0, atol=1e-12)
    np.testing.assert_allclose(np.fft.rfft(killed, axis=-1)[..., 3:], np.fft.rfft(z.data, axis=-1)[..., 3:],
                               atol=1e-12)


def test_spectral_parseval_accounting():
    n, m = 8, 3
    z = randn(1, 2, n, n)
    xi = randn(1, m) + 1j * randn(1, m)
    out = cond.spatial_spectral_condition(Tensor(z), xi).data
    Z = np.fft.rfft(z, axis=-1)
    Z[..., :m] *= xi[0]
    np.testing.assert_allclose(out, np.fft.irfft(Z, n, axis=-1), atol=1e-12)
    # a real output cannot carry an imaginary DC term, so the energy identity needs a real xi at k=0
    xi[0, 0] = xi[0, 0].real
    out = cond.spatial_spectral_condition(Tensor(z), xi).data
    Z = np.fft.rfft(z, axis=-1)
    Z[..., :m] *= xi[0]
    weight = np.full(n // 2 + 1, 2.0)
    weight[0] = weight[-1] = 1.0
    energy = np.sum(weight * np.abs(Z) ** 2) / n
    assert np.sum(out ** 2) == pytest.approx(energy, rel=1e-12)


def test_spectral_shape_errors():
    with pytest.raises(ShapeError):
        cond.spatial_spectral_condition(Tensor(randn(1, 1, 4, 4)), np.ones((1, 4), complex))


def test_euler_residual_cases_and_step_derivative():
    z, fz = Tensor(randn(2, 3, 4, 4)), Tensor(randn(2, 3, 4, 4))
    out = cond.euler_residual(z, fz, np.ones((2, 1)), Tensor(np.zeros(3)), Tensor(np.ones(3)))
    np.testing.assert_allclose(out.data, z.data + fz.data, rtol=1e-15)
    out = cond.euler_residual(z, fz, np.zeros((2, 1)), Tensor(randn(3)), Tensor(np.zeros(3)))
    assert np.array_equal(out.data, z.data)
    w, c, eps = randn(3), randn(3), 1e-6
    f = lambda t: cond.euler_residual(z, fz, np.full((2, 1), t), Tensor(w), Tensor(c)).data  # noqa: E731
    fd = (f(0.3 + eps) - f(0.3 - eps)) / (2 * eps)
    np.testing.assert_allclose(fd, w[None, :, None, None] * fz.data, rtol=1e-7, atol=1e-9)


def test_moe_single_expert_is_euler_residual():
    z, fz = Tensor(randn(2, 3, 4, 4)), Tensor(randn(2, 3, 4, 4))
    dt = randn(2, 1)
    w, c = randn(1, 3), randn(1, 3)
    moe = cond.moe_layer(z, [fz], dt, randn(2, 1), Tensor(w), Tensor(c)).data
    eul = cond.euler_residual(z, fz, dt, Tensor(w[0]), Tensor(c[0])).data
    assert np.array_equal(moe, eul)


def test_moe_saturated_gate_and_gate_normalization():
    z = Tensor(randn(1, 3, 4, 4))
    experts = [Tensor(randn(1, 3, 4, 4)) for _ in range(4)]
    dt = np.array([[0.4]])
    w, c = randn(4, 3), randn(4, 3)
    logits = np.array([[10.0, -10.0, -10.0, -10.0]])
    moe = cond.moe_layer(z, experts, dt, logits, Tensor(w), Tensor(c)).data
    eul = cond.euler_residual(z, experts[0], dt, Tensor(w[0]), Tensor(c[0])).data
    assert np.linalg.norm(moe - eul) / np.linalg.norm(eul) < 1e-4
    gates = ops.softmax(Tensor(randn(5, 4) * 20), axis=-1).data
    np.testing.assert_allclose(gates.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ConfigurationError):
        cond.moe_layer(z, [], dt, np.zeros((1, 0)), Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 3))))


def test_unknown_and_mismatched_conditioning():
    with pytest.raises(ConfigurationError):
        cond.check_kind("film")
    with pytest.raises(ConfigurationError):
        SolverNet("unet_lite", "spatial_spectral", width=4)
    with pytest.raises(ConfigurationError):
        SolverNet("resnet")


MODELS = [("unet_lite", "cond_layer_norm"), ("unet_lite", "euler_residual"), ("unet_lite", "moe"),
          ("ffno_lite", "spatial_spectral"), ("ffno_lite", "cond_layer_norm"), ("ffno_lite", "euler_residual"),
          ("ffno_lite", "moe")]


def small_net(trunk, kind, seed=0):
    return SolverNet(trunk, kind, width=8, modes=3, n_layers=2, n_experts=2, seed=seed)


@pytest.mark.parametrize("trunk,kind", MODELS)
def test_solver_shape_zero_init_and_step_dependence(trunk, kind):
    net = small_net(trunk, kind)
    x = randn(2, 4, 8, 8)
    out = net(Tensor(x), np.array([0.1, -0.3])).data
    assert out.shape == x.shape
    assert np.array_equal(out, np.zeros_like(x))
    net.trunk.head.weight.data[...] = randn(*net.trunk.head.weight.shape)
    a = net(Tensor(x), np.array([0.5, 0.5])).data
    b = net(Tensor(x), np.array([1.0, 1.0])).data
    assert np.max(np.abs(a - b)) > 0


def test_solver_rejects_bad_shapes():
    net = small_net("unet_lite", "cond_layer_norm")
    with pytest.raises(ShapeError):
        net(Tensor(randn(1, 3, 8, 8)), [0.0])
    with pytest.raises(ShapeError):
        net(Tensor(randn(2, 4, 8, 8)), [0.0])


def test_moe_single_expert_network_matches_euler_network():
    """K=1 mixture with the gate MLP present is forward-identical to the Euler-residual net."""
    moe = SolverNet("unet_lite", "moe", width=8, n_experts=1, scale_moe_width=False, seed=3)
    eul = SolverNet("unet_lite", "euler_residual", width=8, seed=3)
    shared = {k: v for k, v in moe.state_dict().items() if k in eul.state_dict()}
    eul.load_state_dict(shared)
    head = randn(*eul.trunk.head.weight.shape)
    eul.trunk.head.weight.data[...] = moe.trunk.head.weight.data[...] = head
    x, dt = randn(2, 4, 8, 8), np.array([0.2, -1.0])
    assert np.array_equal(moe(Tensor(x), dt).data, eul(Tensor(x), dt).data)


def test_cfl_net_contract():
    with pytest.raises(ConfigurationError):
        CflNet(4, width=4)
    with pytest.raises(ConfigurationError):
        CflNet(4, depth=1)
    with pytest.raises(ConfigurationError):
        CflNet(4, pooling="sum")
    for pooling in ("max", "mean"):
        out = CflNet(16, pooling=pooling)(Tensor(randn(3, 16, 16, 16))).data
        assert out.shape == (3,) and np.all(np.isfinite(out))


def test_seeded_construction_is_reproducible():
    a = small_net("ffno_lite", "moe", seed=5).state_dict()
    b = small_net("ffno_lite", "moe", seed=5).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_solver_checkpoint_round_trip(tmp_path):
    from shockcast.dataset import NormStats
    stats = NormStats(np.zeros(4), np.ones(4), 1e-5, 1e-6, 5e-6, 2e-5)
    arch = dict(trunk="ffno_lite", conditioning="spatial_spectral", width=8, modes=3, n_layers=2, seed=1)
    net = SolverNet(**arch)
    net.astype(np.float32)
    save_module(tmp_path, "m", net, {"architecture": arch, "stats": stats.to_dict()})
    back, meta, st = load_solver(tmp_path, "m")
    assert meta["architecture"] == arch and st.dt_mean == 1e-5
    assert all(np.array_equal(v, back.state_dict()[k]) for k, v in net.state_dict().items())
    (tmp_path / "m.json").unlink()
    with pytest.raises(FormatError):
        read_checkpoint(tmp_path, "m")
