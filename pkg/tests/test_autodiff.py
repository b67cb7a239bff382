import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shockcast.autodiff import Tape, Tensor, adam_step, backward, cosine_lr, no_grad, ops
from shockcast.autodiff import fft as F
from shockcast.exceptions import ShapeError

RNG = np.random.default_rng(0)


def leaf(*shape):
    return Tensor(RNG.standard_normal(shape), requires_grad=True)


def conv_reference(x, w, b):
    N, C, H, W = x.shape
    O, _, k, _ = w.shape
    r = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    out = np.zeros((N, O, H, W))
    for n in range(N):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    out[n, o, i, j] = np.sum(xp[n, :, i:i + k, j:j + k] * w[o]) + b[o]
    return out


@pytest.mark.parametrize("k", [1, 3])
def test_conv2d_matches_loop_nest(k):
    x, w, b = RNG.standard_normal((2, 3, 5, 4)), RNG.standard_normal((4, 3, k, k)), RNG.standard_normal(4)
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(out, conv_reference(x, w, b), rtol=1e-12, atol=1e-12)


def test_conv2d_identity_kernel():
    x = RNG.standard_normal((1, 2, 6, 6))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    assert np.array_equal(ops.conv2d(Tensor(x), Tensor(w)).data, x)


def test_conv2d_shape_error_names_op():
    with pytest.raises(ShapeError, match="conv2d"):
        ops.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 2, 3, 3))))


def test_transposed_conv_upsamples_by_two():
    x, w = RNG.standard_normal((1, 2, 3, 3)), RNG.standard_normal((2, 5, 2, 2))
    out = ops.conv_transpose2x2(Tensor(x), Tensor(w)).data
    assert out.shape == (1, 5, 6, 6)
    ref = np.zeros_like(out)
    for c in range(2):
        for o in range(5):
            for i in range(3):
                for j in range(3):
                    ref[0, o, 2 * i:2 * i + 2, 2 * j:2 * j + 2] += x[0, c, i, j] * w[c, o]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-13)


def test_pools_match_reference():
    x = RNG.standard_normal((2, 3, 4, 6))
    blocks = x.reshape(2, 3, 2, 2, 3, 2)
    np.testing.assert_array_equal(ops.max_pool2d(Tensor(x)).data, blocks.max(axis=(3, 5)))
    np.testing.assert_allclose(ops.avg_pool2d(Tensor(x)).data, blocks.mean(axis=(3, 5)), rtol=1e-14)
    np.testing.assert_array_equal(ops.global_max_pool(Tensor(x)).data, x.max(axis=(2, 3)))
    np.testing.assert_allclose(ops.global_avg_pool(Tensor(x)).data, x.mean(axis=(2, 3)), rtol=1e-14)
    with pytest.raises(ShapeError, match="max_pool2d"):
        ops.max_pool2d(Tensor(np.zeros((1, 1, 3, 4))))


def test_group_norm_statistics():
    x = RNG.standard_normal((2, 4, 5, 5)) * 3 + 1
    y = ops.group_norm(Tensor(x), 2).data.reshape(2, 2, -1)
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=-1), 1.0, rtol=1e-4)
    with pytest.raises(ShapeError):
        ops.group_norm(Tensor(x), 3)


def test_gelu_known_values():
    y = ops.gelu(Tensor(np.array([0.0, 10.0, -10.0]))).data
    np.testing.assert_allclose(y, [0.0, 10.0, 0.0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_is_a_distribution(x):
    p = ops.softmax(Tensor(x), axis=-1).data
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_fft_matches_numpy(n):
    z = RNG.standard_normal((3, n)) + 1j * RNG.standard_normal((3, n))
    np.testing.assert_allclose(F.fft(z), np.fft.fft(z), atol=1e-10)
    np.testing.assert_allclose(F.ifft(z), np.fft.ifft(z), atol=1e-12)
    x = z.real
    np.testing.assert_allclose(F.rfft(x), np.fft.rfft(x), atol=1e-10)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ShapeError):
        F.fft(np.zeros(6, complex))


@pytest.mark.parametrize("m", [1, 3, 5, 17])
def test_truncated_transforms_match_full(m):
    x = RNG.standard_normal((2, 32))
    np.testing.assert_allclose(F.rfft_modes(x, m), np.fft.rfft(x)[:, :m], atol=1e-10)
    X = np.fft.rfft(x)
    X[:, m:] = 0
    np.testing.assert_allclose(F.irfft_modes(np.fft.rfft(x)[:, :m], 32), np.fft.irfft(X, 32), atol=1e-12)


def test_rfft2_inverse_pair_64():
    x = RNG.standard_normal((1, 1, 64, 64))
    back = ops.irfft2(ops.rfft2(Tensor(x)), x.shape).data
    assert np.linalg.norm(back - x) / np.linalg.norm(x) < 1e-10
    np.testing.assert_allclose(ops.rfft2(Tensor(x)).data, np.fft.rfft2(x), atol=1e-9)


def test_backward_simple_cases():
    x = leaf(3, 4)
    backward(ops.sum(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))
    y = leaf(5)
    backward(ops.sum(ops.mul(y, y)))
    np.testing.assert_allclose(y.grad, 2 * y.data, rtol=1e-15)


def test_gradients_accumulate_over_reuse():
    x = leaf(4)
    loss = ops.sum(ops.add(ops.mul(x, 3.0), ops.mul(x, x)))
    backward(loss)
    np.testing.assert_allclose(x.grad, 3.0 + 2 * x.data, rtol=1e-14)
    assert len(Tape.from_output(loss)) == len({id(n) for n in Tape.from_output(loss).nodes})


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        backward(ops.mul(leaf(3), 2.0))


def test_no_grad_builds_no_graph():
    x = leaf(3)
    with no_grad():
        y = ops.mul(x, x)
    assert not y.requires_grad


def test_cosine_endpoints():
    assert cosine_lr(0, 100, 0.1) == 0.1
    assert cosine_lr(100, 100, 0.1) == 0.0
    assert cosine_lr(50, 100, 0.1) == pytest.approx(0.05)


def test_adam_descends_and_converges():
    theta = np.array([1.0])
    state = {}
    adam_step([theta], [theta.copy()], state, 1e-2)
    assert 0 < theta[0] < 1
    theta = np.array([1.0, -2.0, 0.5])
    scale = np.array([1.0, 4.0, 0.25])
    state = {}
    for _ in range(2000):
        adam_step([theta], [scale * theta], state, 1e-2)
    assert np.max(np.abs(theta)) < 1e-3


def test_adam_rejects_mismatched_state():
    state = {}
    adam_step([np.ones(2)], [np.ones(2)], state, 0.1)
    with pytest.raises(ValueError):
        adam_step([np.ones(3)], [np.ones(3)], state, 0.1)


def test_relative_error_loss_perfect_is_zero():
    y = RNG.standard_normal((2, 4, 3, 3))
    assert ops.relative_error(Tensor(y), y).item() == 0.0
    assert ops.relative_error(Tensor(2 * y), y).item() == pytest.approx(1.0, rel=1e-12)
    assert ops.mse(Tensor(y + 1), y).item() == pytest.approx(1.0)
    assert ops.mae(Tensor(y - 2), y).item() == pytest.approx(2.0)
    assert math.isfinite(ops.relative_error(Tensor(y), np.zeros_like(y)).item())
