"""Differentiable primitives.

Layout is channels-first ``(N, C, H, W)``.  Each primitive checks shapes and
raises :class:`~shockcast.exceptions.ShapeError` naming itself on mismatch.
"""

from __future__ import annotations

import builtins

import numpy as np

from ..exceptions import ShapeError
from . import fft as _fft
from .tensor import Tensor, as_tensor, make

_SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _bcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _const(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype if isinstance(like, Tensor) else None))


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = _const(a, b), _const(b, a)
    _bcast_shape("add", a, b)
    return make(a.data + b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = _const(a, b), _const(b, a)
    _bcast_shape("sub", a, b)
    return make(a.data - b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def neg(a):
    return make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    """Elementwise product (real or complex, with broadcasting)."""
    a, b = _const(a, b), _const(b, a)
    _bcast_shape("mul", a, b)

    def bw(g):
        return (_unbroadcast(g * np.conj(b.data), a.shape) if a.requires_grad else None,
                _unbroadcast(g * np.conj(a.data), b.shape) if b.requires_grad else None)

    return make(a.data * b.data, (a, b), bw, "mul")


cmul = mul  # complex pointwise multiply is the same rule under the conjugate convention


def gelu(x):
    """tanh approximation of GELU."""
    d = x.data
    inner = _SQRT_2_OVER_PI * (d + 0.044715 * (d * d * d))
    t = np.tanh(inner)

    def bw(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * d * d)
        return (g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * dinner),)

    return make(0.5 * d * (1.0 + t), (x,), bw, "gelu")


def softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make(y, (x,), bw, "softmax")


def real(z):
    return make(z.data.real.copy(), (z,), lambda g: (g.astype(z.dtype),), "real")


def imag(z):
    return make(z.data.imag.copy(), (z,), lambda g: (1j * g,), "imag")


def complex_(re, im):
    """Combine two real tensors into one complex tensor."""
    if re.shape != im.shape:
        raise ShapeError("complex", re.shape, im.shape)
    return make(re.data + 1j * im.data, (re, im), lambda g: (g.real.copy(), g.imag.copy()), "complex")


# ---------------------------------------------------------------- shape ops


def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes):
    inv = np.argsort(axes)
    return make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def concat(xs, axis=1):
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[x.shape for x in xs]) from None
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return make(out, tuple(xs), lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def getitem(x, idx):
    def bw(g):
        full = np.zeros_like(x.data)
        if _fancy(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return make(x.data[idx], (x,), bw, "getitem")


def _fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return builtins.any(isinstance(i, (list, np.ndarray)) for i in items)


def sum(x, axis=None, keepdims=False):
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw, "sum")


def mean(x, axis=None, keepdims=False):
    n = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    s = sum(x, axis, keepdims)
    return mul(s, 1.0 / n)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.conj(np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(np.conj(a.data), -1, -2) @ g, b.shape)
        return ga, gb

    return make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` over the last axis; ``weight`` is ``(out, in)``."""
    if x.shape[-1] != weight.shape[1] or (bias is not None and bias.shape != (weight.shape[0],)):
        raise ShapeError("linear", x.shape, weight.shape, bias.shape if bias is not None else ())
    xd = x.data.reshape(-1, x.shape[-1])
    out = xd @ weight.data.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(*x.shape[:-1], weight.shape[0])

    def bw(g):
        g2 = g.reshape(-1, weight.shape[0])
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ xd if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make(out, parents, bw, "linear")


def einsum2(spec, a, b):
    """Two-operand einsum; gradients via the conjugate-transposed contractions.

    Every index of one operand must appear in the output or the other operand.
    """
    ins, out = spec.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for s, other in ((sa, sb + out), (sb, sa + out)):
        if not set(s) <= set(other):
            raise ShapeError(f"einsum2 {spec} (index summed within a single operand)", a.shape, b.shape)
    try:
        y = np.einsum(spec, a.data, b.data, optimize=True)
    except ValueError:
        raise ShapeError(f"einsum2 {spec}", a.shape, b.shape) from None

    def bw(g):
        ga = np.einsum(f"{out},{sb}->{sa}", g, np.conj(b.data), optimize=True) if a.requires_grad else None
        gb = np.einsum(f"{out},{sa}->{sb}", g, np.conj(a.data), optimize=True) if b.requires_grad else None
        return ga, gb

    return make(y, (a, b), bw, "einsum2")


# ---------------------------------------------------------------- convolution & pooling


def _check_nchw(op, x):
    if x.ndim != 4:
        raise ShapeError(f"{op} (expected NCHW input)", x.shape)


def conv2d(x, weight, bias=None):
    """Stride-1 'same' convolution (zero padding) with 1x1 or 3x3 kernels."""
    _check_nchw("conv2d", x)
    O, C, kh, kw = weight.shape
    if C != x.shape[1] or kh != kw or kh not in (1, 3) or (bias is not None and bias.shape != (O,)):
        raise ShapeError("conv2d", x.shape, weight.shape, bias.shape if bias is not None else ())
    N, _, H, W = x.shape
    xd = x.data
    if kh == 1:
        cols = xd.transpose(1, 0, 2, 3).reshape(C, -1)
    else:
        xp = np.pad(xd.transpose(1, 0, 2, 3), ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = np.empty((C, 9, N, H, W), dtype=xd.dtype)
        for p in range(3):
            for q in range(3):
                cols[:, 3 * p + q] = xp[:, :, p:p + H, q:q + W]
        cols = cols.reshape(C * 9, -1)
    wmat = weight.data.reshape(O, -1)
    y = wmat @ cols
    if bias is not None:
        y += bias.data[:, None]
    out = y.reshape(O, N, H, W).transpose(1, 0, 2, 3)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(O, -1)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (g2 @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        if x.requires_grad:
            dcols = wmat.T @ g2
            if kh == 1:
                gx = dcols.reshape(C, N, H, W).transpose(1, 0, 2, 3)
            else:
                dcols = dcols.reshape(C, 9, N, H, W)
                gxp = np.zeros((C, N, H + 2, W + 2), dtype=dcols.dtype)
                for p in range(3):
                    for q in range(3):
                        gxp[:, :, p:p + H, q:q + W] += dcols[:, 3 * p + q]
                gx = gxp[:, :, 1:-1, 1:-1].transpose(1, 0, 2, 3)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make(np.ascontiguousarray(out), parents, bw, "conv2d")


def conv_transpose2x2(x, weight, bias=None):
    """Transposed 2x2 convolution with stride 2 (exact x2 upsampling); ``weight`` is ``(C_in, C_out, 2, 2)``."""
    _check_nchw("conv_transpose2x2", x)
    C, O, kh, kw = weight.shape
    if C != x.shape[1] or (kh, kw) != (2, 2) or (bias is not None and bias.shape != (O,)):
        raise ShapeError("conv_transpose2x2", x.shape, weight.shape)
    N, _, H, W = x.shape
    # out[n, o, 2i+p, 2j+q] = sum_c x[n, c, i, j] w[c, o, p, q]
    y = np.einsum("nchw,copq->nohpwq", x.data, weight.data, optimize=True).reshape(N, O, 2 * H, 2 * W)
    if bias is not None:
        y = y + bias.data[None, :, None, None]

    def bw(g):
        g6 = g.reshape(N, O, H, 2, W, 2)
        gx = np.einsum("nohpwq,copq->nchw", g6, weight.data, optimize=True) if x.requires_grad else None
        gw = np.einsum("nohpwq,nchw->copq", g6, x.data, optimize=True) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make(y, parents, bw, "conv_transpose2x2")


def _pool_blocks(op, x):
    _check_nchw(op, x)
    N, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"{op} (spatial sides must be even)", x.shape)
    return x.data.reshape(N, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H // 2, W // 2, 4)


def max_pool2d(x):
    """2x2 max pooling, stride 2."""
    blocks = _pool_blocks("max_pool2d", x)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    N, C, H, W = x.shape

    def bw(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        return (gb.reshape(N, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x.shape),)

    return make(out, (x,), bw, "max_pool2d")


def avg_pool2d(x):
    """2x2 mean pooling, stride 2."""
    blocks = _pool_blocks("avg_pool2d", x)
    N, C, H, W = x.shape

    def bw(g):
        g = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        return (0.25 * g,)

    return make(blocks.mean(axis=-1), (x,), bw, "avg_pool2d")


def global_max_pool(x):
    """``(N, C, H, W) -> (N, C)`` maximum over space."""
    _check_nchw("global_max_pool", x)
    N, C, H, W = x.shape
    flat = x.data.reshape(N, C, -1)
    arg = flat.argmax(axis=-1)

    def bw(g):
        gf = np.zeros_like(flat)
        np.put_along_axis(gf, arg[..., None], g[..., None], axis=-1)
        return (gf.reshape(x.shape),)

    return make(np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0], (x,), bw, "global_max_pool")


def global_avg_pool(x):
    _check_nchw("global_avg_pool", x)
    N, C, H, W = x.shape

    def bw(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).copy(),)

    return make(x.data.mean(axis=(2, 3)), (x,), bw, "global_avg_pool")


# ---------------------------------------------------------------- normalisation


def group_norm(x, num_groups, weight=None, bias=None, eps=1e-5):
    """Group normalisation over (channels-in-group, H, W); ``num_groups=1`` is layer norm."""
    _check_nchw("group_norm", x)
    N, C, H, W = x.shape
    if C % num_groups:
        raise ShapeError(f"group_norm ({num_groups} groups)", x.shape)
    xg = x.data.reshape(N, num_groups, -1)
    mu = xg.mean(axis=-1, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).reshape(x.shape)
    out = xhat
    if weight is not None:
        out = out * weight.data[None, :, None, None]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def bw(g):
        gw = (g * xhat).sum(axis=(0, 2, 3)) if weight is not None and weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gh = g * weight.data[None, :, None, None] if weight is not None else g
        gh = gh.reshape(N, num_groups, -1)
        xh = xhat.reshape(N, num_groups, -1)
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xh * (gh * xh).mean(axis=-1, keepdims=True))
        grads = [gx.reshape(x.shape)]
        if weight is not None:
            grads.append(gw)
        if bias is not None:
            grads.append(gb)
        return tuple(grads)

    parents = tuple(t for t in (x, weight, bias) if t is not None)
    return make(out, parents, bw, "group_norm")


# ---------------------------------------------------------------- spectral


def _axis_len(x, axis):
    return x.shape[axis]


def fft(z, axis=-1):
    n = _axis_len(z, axis)
    return make(_fft.fft(z.data, axis), (z,), lambda g: (n * _fft.ifft(g, axis),), "fft")


def ifft(z, axis=-1):
    n = _axis_len(z, axis)
    return make(_fft.ifft(z.data, axis), (z,), lambda g: (_fft.fft(g, axis) / n,), "ifft")


def rfft(x, axis=-1, modes=None):
    """Real-to-complex transform along ``axis``, optionally keeping only the lowest ``modes`` bins."""
    n = _axis_len(x, axis)
    m = n // 2 + 1 if modes is None else modes
    if m > n // 2 + 1:
        raise ShapeError(f"rfft ({m} modes)", x.shape)
    out = _fft.rfft_modes(x.data, m, axis)

    def bw(g):
        # adjoint is Re(n * ifft(zero-padded g)); via irfft with the interior bins halved
        w = np.full(m, 0.5)
        w[0] = 1.0
        if m == n // 2 + 1:
            w[-1] = 1.0
        shape = [1] * g.ndim
        shape[axis] = m
        return (n * _fft.irfft_modes(g * w.reshape(shape).astype(g.real.dtype), n, axis),)

    return make(out, (x,), bw, "rfft")


def irfft(X, n, axis=-1):
    """Inverse of :func:`rfft` to length ``n``; missing high bins are zero."""
    m = _axis_len(X, axis)

    def bw(g):
        G = _fft.rfft_modes(g, m, axis)
        c = np.full(m, 2.0)
        c[0] = 1.0
        if m == n // 2 + 1:
            c[-1] = 1.0
        shape = [1] * g.ndim
        shape[axis] = m
        return (G * (c / n).reshape(shape),)

    return make(_fft.irfft_modes(X.data, n, axis), (X,), bw, "irfft")


def spectral_mix(X, W, axis):
    """Per-mode channel mixing ``Y[n, o, .., k, ..] = sum_c X[n, c, .., k, ..] W[c, o, k]``.

    ``X`` is ``(N, C, H, W)`` complex with its retained modes on ``axis`` (2 or 3);
    ``W`` is ``(C, O, m)``.  Runs as one batched matrix product per mode.
    """
    _check_nchw("spectral_mix", X)
    axis = axis % 4
    if axis not in (2, 3) or W.ndim != 3 or W.shape[0] != X.shape[1] or W.shape[2] != X.shape[axis]:
        raise ShapeError("spectral_mix", X.shape, W.shape)
    N, C = X.shape[:2]
    m = X.shape[axis]
    other = 3 if axis == 2 else 2
    L = X.shape[other]
    O = W.shape[1]
    perm = (axis, 0, other, 1)                      # -> (m, N, L, C)
    xt = X.data.transpose(perm).reshape(m, N * L, C)
    wt = W.data.transpose(2, 0, 1)                  # (m, C, O)
    y = (xt @ wt).reshape(m, N, L, O)
    inv = np.argsort(perm)

    def bw(g):
        gt = g.transpose(perm).reshape(m, N * L, O)
        gx = gw = None
        if X.requires_grad:
            gx = (gt @ np.conj(wt).transpose(0, 2, 1)).reshape(m, N, L, C).transpose(inv)
        if W.requires_grad:
            gw = (np.conj(xt).transpose(0, 2, 1) @ gt).transpose(1, 2, 0)
        return gx, gw

    return make(y.transpose(inv), (X, W), bw, "spectral_mix")


def rfft2(x):
    """2D real FFT over the last two axes (half spectrum on the last)."""
    return fft(rfft(x, -1), -2)


def irfft2(X, shape):
    return irfft(ifft(X, -2), shape[-1], -1)


# ---------------------------------------------------------------- losses


def mse(pred, target):
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError("mse", pred.shape, target.shape)
    d = pred.data - target.data
    n = d.size
    return make(np.asarray((d * d).mean()), (pred, target), lambda g: (2 * g * d / n, -2 * g * d / n), "mse")


def mae(pred, target):
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError("mae", pred.shape, target.shape)
    d = pred.data - target.data
    n = d.size
    s = np.sign(d)
    return make(np.asarray(np.abs(d).mean()), (pred, target), lambda g: (g * s / n, -g * s / n), "mae")


def relative_error(pred, target, eps=1e-8):
    """Mean over samples and channels of ``||pred - target||_2 / max(||target||_2, eps)``.

    Norms are over the trailing spatial axes of ``(N, C, ...)`` input.
    """
    target = as_tensor(target)
    if pred.shape != target.shape or pred.ndim < 2:
        raise ShapeError("relative_error", pred.shape, target.shape)
    axes = tuple(range(2, pred.ndim))
    d = pred.data - target.data
    num = np.sqrt((d * d).sum(axis=axes, keepdims=True))
    den = np.maximum(np.sqrt((target.data ** 2).sum(axis=axes, keepdims=True)), eps)
    k = num.size
    val = (num / den).mean()

    def bw(g):
        safe = np.where(num > 0, num, 1.0)
        gp = g * d / (safe * den * k) * (num > 0)
        gt = -gp
        if target.requires_grad:
            tn = np.sqrt((target.data ** 2).sum(axis=axes, keepdims=True))
            active = tn > eps
            gt = gt - g * active * (num / (den ** 2 * k)) * target.data / np.where(active, tn, 1.0)
        return gp, gt

    return make(np.asarray(val), (pred, target), bw, "relative_error")
