"""Training and inference for the step-conditioned surrogate."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Adam, Tensor, backward, cosine_lr, no_grad, ops
from .dataset import NormStats
from .exceptions import ConfigurationError, DivergenceError
from .models import SolverNet

REL_EPS = 1e-8


def solver_forward(net: SolverNet, x_norm, dt_norm, batch_size=64):
    """Normalized next state for ``(N, 4, H, W)`` normalized inputs and ``(N,)`` normalized steps."""
    x_norm = np.asarray(x_norm, dtype=net.dtype)
    dt_norm = np.broadcast_to(np.asarray(dt_norm, dtype=np.float64).reshape(-1), (len(x_norm),))
    out = []
    with no_grad():
        for i in range(0, len(x_norm), batch_size):
            out.append(net(Tensor(x_norm[i:i + batch_size]), dt_norm[i:i + batch_size]).data)
    return np.concatenate(out)


def relative_loss(pred, target):
    """Per-sample, per-field relative L2 error averaged over both (numpy, no graph)."""
    axes = tuple(range(2, np.ndim(pred)))
    num = np.sqrt(((pred - target) ** 2).sum(axis=axes))
    den = np.maximum(np.sqrt((target ** 2).sum(axis=axes)), REL_EPS)
    return float((num / den).mean())


def identity_baseline(x_norm, y_norm):
    """Loss of predicting no change; the number every trained surrogate must beat."""
    return relative_loss(np.asarray(x_norm, np.float64), np.asarray(y_norm, np.float64))


def train_solver(net: SolverNet, x, dts, y, stats: NormStats, epochs=50, batch_size=16, lr=1e-3, noise_level=0.0,
                 seed=0, log=None):
    """Fit ``net`` on physical pairs ``(x_j, dt_j, x_{j+1})`` by the mean relative error in normalized space."""
    if not (len(x) == len(dts) == len(y)):
        raise ConfigurationError(f"mismatched pair counts {len(x)}, {len(dts)}, {len(y)}")
    dtype = net.dtype
    rng = np.random.default_rng(seed)
    xn = stats.normalize_fields(np.asarray(x)).astype(dtype)
    yn = stats.normalize_fields(np.asarray(y)).astype(dtype)
    dn = stats.normalize_dt(dts).astype(dtype)
    opt = Adam(net.parameters(), lr)
    n_steps = epochs * math.ceil(len(xn) / batch_size)
    history, step = [], 0
    for epoch in range(epochs):
        total = 0.0
        order = rng.permutation(len(xn))
        for i in range(0, len(xn), batch_size):
            idx = order[i:i + batch_size]
            xb = xn[idx]
            if noise_level:
                xb = xb + rng.normal(0.0, noise_level, size=xb.shape).astype(dtype)
            opt.zero_grad()
            loss = ops.relative_error(net(Tensor(xb), dn[idx]), yn[idx], REL_EPS)
            if not np.isfinite(loss.item()):
                raise DivergenceError(f"non-finite solver training loss at epoch {epoch}", epoch)
            backward(loss)
            opt.step(cosine_lr(step, n_steps, lr))
            step += 1
            total += loss.item() * len(idx)
        history.append(total / len(xn))
        if log:
            log(f"solver {net.trunk_name}/{net.kind} epoch {epoch + 1}/{epochs} loss {history[-1]:.4f}")
    return net, history
