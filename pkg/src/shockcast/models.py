"""Surrogate trunks (U-Net-lite, F-FNO-lite) with step-size conditioning, and the CFL regressor."""

from __future__ import annotations

import math

import numpy as np

from . import conditioning as cond
from .autodiff import Tensor, ops
from .exceptions import ConfigurationError, ShapeError
from .fields import N_FIELDS
from .nn import Conv2d, ConvTranspose2x2, GroupNorm, Linear, MLP, Module, _param, default_groups, uniform_init

TRUNKS = ("unet_lite", "ffno_lite")
BASE_KIND = {"unet_lite": "cond_layer_norm", "ffno_lite": "spatial_spectral"}


def expert_width(width, kind, n_experts, scale_moe_width):
    if kind == "moe" and scale_moe_width:
        return max(4, int(round(width / math.sqrt(n_experts))))
    return width


# ---------------------------------------------------------------- residual sites


class ResidualSite(Module):
    """Combines a skip path with one or more expert outputs.

    ``plain`` kinds use ``skip + F(z)``; ``euler_residual`` scales ``F`` by an
    affine function of the step; ``moe`` mixes ``K`` such terms by a gate that
    sees only the step embedding.
    """

    def __init__(self, kind, channels, n_experts, emb_dim, rng):
        super().__init__()
        self.kind = kind
        if kind in ("euler_residual", "moe"):
            k = n_experts if kind == "moe" else 1
            self.gate_weight = _param(rng.normal(0.0, 0.1, size=(k, channels)))
            self.gate_bias = _param(np.ones((k, channels)))
        if kind == "moe":
            self.gate = MLP(emb_dim, emb_dim, n_experts, rng)

    def forward(self, skip, outputs, dt_norm, emb):
        if self.kind == "euler_residual":
            return cond.euler_residual(skip, outputs[0], dt_norm, self.gate_weight[0], self.gate_bias[0])
        if self.kind == "moe":
            return cond.moe_layer(skip, outputs, dt_norm, self.gate(emb), self.gate_weight, self.gate_bias)
        return ops.add(skip, outputs[0])


class Norm(Module):
    """Layer norm; with ``cond_layer_norm`` the scale and shift come from the step embedding."""

    def __init__(self, channels, conditioned, emb_dim, rng):
        super().__init__()
        self.conditioned = conditioned
        if conditioned:
            self.scale = Linear(emb_dim, channels, rng)
            self.shift = Linear(emb_dim, channels, rng)
        else:
            self.inner = GroupNorm(channels, groups=1)

    def forward(self, z, emb):
        if self.conditioned:
            return cond.cond_layer_norm(z, self.scale(emb), self.shift(emb))
        return self.inner(z)


# ---------------------------------------------------------------- U-Net-lite


class ConvPath(Module):
    """``norm -> GELU -> conv3x3 -> norm -> GELU -> conv3x3``."""

    def __init__(self, c_in, hidden, c_out, conditioned, emb_dim, rng):
        super().__init__()
        self.norm1 = Norm(c_in, conditioned, emb_dim, rng)
        self.conv1 = Conv2d(c_in, hidden, 3, rng)
        self.norm2 = Norm(hidden, conditioned, emb_dim, rng)
        self.conv2 = Conv2d(hidden, c_out, 3, rng)

    def forward(self, z, emb):
        h = self.conv1(ops.gelu(self.norm1(z, emb)))
        return self.conv2(ops.gelu(self.norm2(h, emb)))


class ResBlock(Module):
    def __init__(self, c_in, c_out, kind, emb_dim, rng, n_experts, scale_moe_width):
        super().__init__()
        n_paths = n_experts if kind == "moe" else 1
        hidden = expert_width(c_out, kind, n_experts, scale_moe_width)
        conditioned = kind == "cond_layer_norm"
        self.proj = Conv2d(c_in, c_out, 1, rng) if c_in != c_out else None
        self.experts = [ConvPath(c_in, hidden, c_out, conditioned, emb_dim, rng) for _ in range(n_paths)]
        self.site = ResidualSite(kind, c_out, n_experts, emb_dim, rng)

    def forward(self, z, dt_norm, emb):
        skip = self.proj(z) if self.proj is not None else z
        return self.site(skip, [e(z, emb) for e in self.experts], dt_norm, emb)


class UNetLite(Module):
    """Two down/up levels (widths w, 2w, 2w), concatenated skips, mean-pool down, transposed-conv up."""

    def __init__(self, width, kind, emb_dim, rng, n_experts=4, scale_moe_width=True, in_channels=N_FIELDS):
        super().__init__()
        if kind == "spatial_spectral":
            raise ConfigurationError("spatial-spectral conditioning needs a spectral trunk (ffno_lite)")
        w = width
        blk = dict(kind=kind, emb_dim=emb_dim, rng=rng, n_experts=n_experts, scale_moe_width=scale_moe_width)
        self.lift = Conv2d(in_channels, w, 3, rng)
        self.enc0 = ResBlock(w, w, **blk)
        self.enc1 = ResBlock(w, 2 * w, **blk)
        self.mid = ResBlock(2 * w, 2 * w, **blk)
        self.up1 = ConvTranspose2x2(2 * w, 2 * w, rng)
        self.dec1 = ResBlock(4 * w, 2 * w, **blk)
        self.up0 = ConvTranspose2x2(2 * w, w, rng)
        self.dec0 = ResBlock(2 * w, w, **blk)
        self.out_norm = Norm(w, kind == "cond_layer_norm", emb_dim, rng)
        self.head = Conv2d(w, N_FIELDS, 1, rng, zero=True)

    def forward(self, x, dt_norm, emb):
        h0 = self.enc0(self.lift(x), dt_norm, emb)
        h1 = self.enc1(ops.avg_pool2d(h0), dt_norm, emb)
        m = self.mid(ops.avg_pool2d(h1), dt_norm, emb)
        d1 = self.dec1(ops.concat([self.up1(m), h1], axis=1), dt_norm, emb)
        d0 = self.dec0(ops.concat([self.up0(d1), h0], axis=1), dt_norm, emb)
        return self.head(ops.gelu(self.out_norm(d0, emb)))


# ---------------------------------------------------------------- F-FNO-lite


class FactorizedSpectral(Module):
    """Sum over both spatial axes of a 1D spectral convolution keeping ``modes`` bins.

    With ``conditioned`` the retained block along each axis is multiplied by a
    complex vector ``xi`` produced from the step embedding and shared across
    channels.
    """

    def __init__(self, c_in, c_out, modes, conditioned, emb_dim, rng):
        super().__init__()
        self.modes = modes
        self.conditioned = conditioned
        scale = 1.0 / (c_in * c_out)
        for ax in ("x", "y"):
            setattr(self, f"w{ax}_re", _param(rng.uniform(0, scale, size=(c_in, c_out, modes))))
            setattr(self, f"w{ax}_im", _param(rng.uniform(0, scale, size=(c_in, c_out, modes))))
            if conditioned:
                head = Linear(emb_dim, 2 * modes, rng)
                head.weight.data *= 0.1
                head.bias.data[:modes] = 1.0  # xi starts near 1 + 0i
                setattr(self, f"xi_{ax}", head)

    def xi(self, ax, emb):
        out = getattr(self, f"xi_{ax}")(emb)
        return ops.complex_(out[:, :self.modes], out[:, self.modes:])

    def forward(self, z, emb):
        N, C, H, W = z.shape
        if self.modes > min(H, W) // 2 + 1:
            raise ShapeError(f"spectral layer ({self.modes} modes)", z.shape)
        total = None
        for ax, axis in (("x", 2), ("y", 3)):
            X = ops.rfft(z, axis, self.modes)
            wc = ops.complex_(getattr(self, f"w{ax}_re"), getattr(self, f"w{ax}_im"))
            Y = ops.spectral_mix(X, wc, axis)
            if self.conditioned:
                shape = [N, 1, 1, 1]
                shape[axis] = self.modes
                Y = ops.mul(Y, ops.reshape(self.xi(ax, emb), tuple(shape)))
            y = ops.irfft(Y, z.shape[axis], axis)
            total = y if total is None else ops.add(total, y)
        return total


class SpectralPath(Module):
    """Spectral mixing followed by a pointwise two-layer feed-forward."""

    def __init__(self, width, hidden, modes, conditioned, emb_dim, rng):
        super().__init__()
        self.spectral = FactorizedSpectral(width, hidden, modes, conditioned, emb_dim, rng)
        self.ff1 = Conv2d(hidden, 2 * hidden, 1, rng)
        self.ff2 = Conv2d(2 * hidden, width, 1, rng)

    def forward(self, z, emb):
        return self.ff2(ops.gelu(self.ff1(self.spectral(z, emb))))


class FFNOLite(Module):
    """Lift, ``n_layers`` residual spectral layers, pointwise projection; grid coordinates appended to the input."""

    def __init__(self, width, kind, emb_dim, rng, n_layers=4, modes=8, n_experts=4, scale_moe_width=True,
                 in_channels=N_FIELDS):
        super().__init__()
        self.modes = modes
        self.lift = Conv2d(in_channels + 2, width, 1, rng)
        n_paths = n_experts if kind == "moe" else 1
        hidden = expert_width(width, kind, n_experts, scale_moe_width)
        conditioned = kind == "spatial_spectral"
        self.layers = [_FFNOLayer(width, hidden, modes, conditioned, kind, n_paths, n_experts, emb_dim, rng)
                       for _ in range(n_layers)]
        self.proj = Conv2d(width, width, 1, rng)
        self.head = Conv2d(width, N_FIELDS, 1, rng, zero=True)

    @staticmethod
    def coordinates(n, h, w, dtype):
        gx, gy = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
        return np.broadcast_to(np.stack([gx, gy])[None], (n, 2, h, w)).astype(dtype)

    def forward(self, x, dt_norm, emb):
        N, _, H, W = x.shape
        coords = Tensor(self.coordinates(N, H, W, x.dtype))
        z = self.lift(ops.concat([x, coords], axis=1))
        for layer in self.layers:
            z = layer(z, dt_norm, emb)
        return self.head(ops.gelu(self.proj(z)))


class _FFNOLayer(Module):
    """Residual spectral layer; with ``cond_layer_norm`` the paths see a step-conditioned pre-norm of ``z``."""

    def __init__(self, width, hidden, modes, conditioned, kind, n_paths, n_experts, emb_dim, rng):
        super().__init__()
        self.norm = Norm(width, True, emb_dim, rng) if kind == "cond_layer_norm" else None
        self.experts = [SpectralPath(width, hidden, modes, conditioned, emb_dim, rng) for _ in range(n_paths)]
        self.site = ResidualSite(kind, width, n_experts, emb_dim, rng)

    def forward(self, z, dt_norm, emb):
        h = self.norm(z, emb) if self.norm is not None else z
        return self.site(z, [e(h, emb) for e in self.experts], dt_norm, emb)


# ---------------------------------------------------------------- full surrogate


class SolverNet(Module):
    """``(normalized state, normalized step) -> normalized next state``."""

    def __init__(self, trunk="unet_lite", conditioning=None, width=32, emb_dim=None, n_experts=4,
                 scale_moe_width=True, modes=8, n_layers=4, seed=0):
        super().__init__()
        if trunk not in TRUNKS:
            raise ConfigurationError(f"unknown trunk {trunk!r}; expected one of {TRUNKS}")
        kind = cond.check_kind(conditioning or BASE_KIND[trunk])
        if kind == "moe" and n_experts < 1:
            raise ConfigurationError("mixture of experts needs n_experts >= 1")
        self.trunk_name, self.kind = trunk, kind
        rng = np.random.default_rng(seed)
        emb_dim = emb_dim or width
        self.embed = cond.TimeEmbedding(emb_dim, rng)
        if trunk == "unet_lite":
            self.trunk = UNetLite(width, kind, emb_dim, rng, n_experts, scale_moe_width)
        else:
            self.trunk = FFNOLite(width, kind, emb_dim, rng, n_layers, modes, n_experts, scale_moe_width)

    def forward(self, x, dt_norm):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 4 or x.shape[1] != N_FIELDS:
            raise ShapeError("solver_forward", x.shape)
        dt = np.asarray(dt_norm.data if isinstance(dt_norm, Tensor) else dt_norm, dtype=x.dtype).reshape(-1, 1)
        if dt.shape[0] != x.shape[0]:
            raise ShapeError("solver_forward (one step size per sample)", x.shape, dt.shape)
        emb = self.embed(dt[:, 0])
        return self.trunk(x, Tensor(dt), emb)


# ---------------------------------------------------------------- neural CFL regressor


class CflNet(Module):
    """``[conv3x3 -> GN -> GELU -> pool] x depth -> global pool -> linear``; one scalar per sample."""

    def __init__(self, in_channels, width=8, depth=3, pooling="max", seed=0):
        super().__init__()
        if width < 8 or depth < 2:
            raise ConfigurationError(f"need width >= 8 and depth >= 2, got {width}, {depth}")
        if pooling not in ("max", "mean"):
            raise ConfigurationError(f"pooling must be 'max' or 'mean', got {pooling!r}")
        rng = np.random.default_rng(seed)
        self.pooling = pooling
        chans = [in_channels] + [width * 2 ** min(i, 2) for i in range(depth)]
        self.convs = [Conv2d(chans[i], chans[i + 1], 3, rng) for i in range(depth)]
        self.norms = [GroupNorm(chans[i + 1], default_groups(chans[i + 1], 4)) for i in range(depth)]
        self.out = Linear(chans[-1], 1, rng)

    def forward(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        down = ops.max_pool2d if self.pooling == "max" else ops.avg_pool2d
        readout = ops.global_max_pool if self.pooling == "max" else ops.global_avg_pool
        for conv, norm in zip(self.convs, self.norms):
            x = down(ops.gelu(norm(conv(x))))
        return ops.reshape(self.out(readout(x)), (x.shape[0],))
