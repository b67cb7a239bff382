"""Timestep embedding and the four ways a surrogate layer can depend on the step size.

All functions take and return :class:`~shockcast.autodiff.Tensor` objects in
``(N, C, H, W)`` layout; per-sample conditioning vectors are ``(N, C)`` and are
broadcast over space.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, ops
from .exceptions import ConfigurationError, ShapeError
from .nn import MLP, Module

CONDITIONING_KINDS = ("cond_layer_norm", "spatial_spectral", "euler_residual", "moe")
N_FREQ = 32


def sinusoidal_features(dt_norm, n_freq=N_FREQ, max_period=1e4):
    """``(N,)`` normalized step sizes -> ``(N, 2 n_freq)`` ``[sin | cos]`` features.

    Frequencies are geometric from 1 down to ``1 / max_period``.
    """
    dt_norm = np.asarray(dt_norm, dtype=np.float64).reshape(-1)
    freqs = np.exp(-np.log(max_period) * np.arange(n_freq) / max(n_freq - 1, 1))
    ang = dt_norm[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class TimeEmbedding(Module):
    """Sinusoidal features followed by a two-layer GELU MLP."""

    def __init__(self, dim, rng, n_freq=N_FREQ):
        super().__init__()
        self.n_freq = n_freq
        self.mlp = MLP(2 * n_freq, dim, dim, rng)

    def forward(self, dt_norm):
        feats = Tensor(sinusoidal_features(dt_norm, self.n_freq).astype(self.dtype))
        return self.mlp(feats)


def _per_channel(v, z, op):
    v = as_tensor(v)
    if v.ndim != 2 or v.shape[0] not in (1, z.shape[0]) or v.shape[1] != z.shape[1]:
        raise ShapeError(op, z.shape, v.shape)
    return ops.reshape(v, (v.shape[0], v.shape[1], 1, 1))


def cond_layer_norm(z, a, b, groups=1, eps=1e-5):
    """``GN(z) * (1 + a) + b`` with ``a``, ``b`` of shape ``(N, C)``."""
    h = ops.group_norm(z, groups, eps=eps)
    return ops.add(ops.mul(h, ops.add(_per_channel(a, z, "cond_layer_norm"), 1.0)),
                   _per_channel(b, z, "cond_layer_norm"))


def spatial_spectral_condition(z, xi, axis=-1):
    """Multiply the lowest ``m`` Fourier modes of ``z`` along ``axis`` by ``xi`` (``(N, m)`` complex).

    ``xi`` is shared across channels; modes above ``m`` pass through untouched.
    Written as ``z + irfft((xi - 1) * rfft_m(z))`` so the untouched part is exact.
    """
    axis = axis % z.ndim
    xi = as_tensor(xi)
    m = xi.shape[-1]
    n = z.shape[axis]
    if xi.ndim != 2 or xi.shape[0] not in (1, z.shape[0]) or m > n // 2 + 1:
        raise ShapeError("spatial_spectral_condition", z.shape, xi.shape)
    shape = [xi.shape[0]] + [1] * (z.ndim - 1)
    shape[axis] = m
    X = ops.rfft(z, axis, m)
    delta = ops.mul(X, ops.sub(ops.reshape(xi, tuple(shape)), 1.0))
    return ops.add(z, ops.irfft(delta, n, axis))


def affine_gate(dt_norm, weight, bias):
    """``W * dt + c``: ``dt_norm`` ``(N, 1)``, ``weight``/``bias`` ``(C,)`` -> ``(N, C)``."""
    return ops.add(ops.mul(as_tensor(dt_norm), weight), bias)


def euler_residual(z, fz, dt_norm, weight, bias):
    """``z + (W dt + c) * F(z)``."""
    if z.shape != fz.shape:
        raise ShapeError("euler_residual", z.shape, fz.shape)
    a = _per_channel(affine_gate(dt_norm, weight, bias), z, "euler_residual")
    return ops.add(z, ops.mul(a, fz))


def moe_layer(z, expert_outputs, dt_norm, gate_logits, weights, biases):
    """``z + sum_k softmax(logits)_k (W_k dt + c_k) * F_k(z)``, all experts dense.

    ``gate_logits`` is ``(N, K)``; ``weights``/``biases`` are ``(K, C)``.
    """
    K = len(expert_outputs)
    if K == 0:
        raise ConfigurationError("mixture of experts needs at least one expert")
    gate_logits = as_tensor(gate_logits)
    if gate_logits.shape[-1] != K or weights.shape[0] != K or biases.shape[0] != K:
        raise ShapeError("moe_layer", gate_logits.shape, weights.shape, biases.shape)
    gates = ops.softmax(gate_logits, axis=-1)
    total = None
    for k, fk in enumerate(expert_outputs):
        if fk.shape != z.shape:
            raise ShapeError("moe_layer expert", z.shape, fk.shape)
        a = affine_gate(dt_norm, weights[k], biases[k])
        g = ops.reshape(gates[:, k], (gates.shape[0], 1, 1, 1))
        term = ops.mul(g, ops.mul(_per_channel(a, z, "moe_layer"), fk))
        total = term if total is None else ops.add(total, term)
    return ops.add(z, total)


def check_kind(kind):
    if kind not in CONDITIONING_KINDS:
        raise ConfigurationError(f"unknown conditioning {kind!r}; expected one of {CONDITIONING_KINDS}")
    return kind
