"""Learned timestep model: flow state -> coarse step size."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Adam, Tensor, backward, cosine_lr, no_grad, ops
from .dataset import NormStats
from .exceptions import ConfigurationError, DivergenceError
from .features import BASE_CHANNELS, CFL_CHANNELS, GRADIENT_CHANNELS, cfl_channels, gradient_channels
from .fields import AIR, FlowField, GasModel
from .models import CflNet


@dataclass(frozen=True)
class CflNetConfig:
    use_gradient_features: bool = False
    use_cfl_features: bool = False
    pooling: str = "max"
    width: int = 8
    depth: int = 3

    def __post_init__(self):
        if self.width < 8 or self.depth < 2:
            raise ConfigurationError(f"need width >= 8 and depth >= 2, got {self.width}, {self.depth}")
        if self.pooling not in ("max", "mean"):
            raise ConfigurationError(f"pooling must be 'max' or 'mean', got {self.pooling!r}")

    @property
    def channels(self) -> tuple[str, ...]:
        names = BASE_CHANNELS
        if self.use_gradient_features:
            names += GRADIENT_CHANNELS
        if self.use_cfl_features:
            names += CFL_CHANNELS
        return names

    @property
    def label(self) -> str:
        parts = ["base"]
        if self.use_gradient_features:
            parts.append("grad")
        if self.use_cfl_features:
            parts.append("cfl")
        return "+".join(parts) + f"/{self.pooling}"

    def to_dict(self):
        return asdict(self)


def _z(x, mean, std):
    return (x - mean[:, None, None]) / std[:, None, None]


def build_features(state, cfg: CflNetConfig, stats: NormStats, gas: GasModel = AIR, spacing=None):
    """Network input for one :class:`FlowField` or a ``(N, 4, nx, ny)`` stack of physical fields.

    Channel order is ``cfg.channels``: z-scored base fields, then optional
    z-scored gradients (d/dx, d/dy per field), then optional z-scored
    ``lambda, |u|, |v|, a``.  ``spacing`` is ``(dx, dy)`` and is taken from
    the field's grid when a :class:`FlowField` is given.
    """
    if isinstance(state, FlowField):
        spacing = (state.grid.dx, state.grid.dy)
        stack = state.stack()[None]
    else:
        stack = np.asarray(state, dtype=np.float64)
        if stack.ndim == 3:
            stack = stack[None]
    parts = [_z(stack, stats.field_mean, stats.field_std)]
    if cfg.use_gradient_features:
        if stats.grad_mean is None or stats.grad_std is None:
            raise ConfigurationError("gradient features enabled but no gradient statistics")
        if spacing is None:
            raise ConfigurationError("gradient features need the grid spacing")
        parts.append(_z(gradient_channels(stack, *spacing), stats.grad_mean, stats.grad_std))
    if cfg.use_cfl_features:
        if stats.cfl_mean is None or stats.cfl_std is None:
            raise ConfigurationError("CFL features enabled but no CFL-feature statistics")
        parts.append(_z(cfl_channels(stack, gas), stats.cfl_mean, stats.cfl_std))
    return np.concatenate(parts, axis=1)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_cfl(features, dts, cfg: CflNetConfig, stats: NormStats, epochs=60, batch_size=64, lr=2e-3,
              noise_level=0.01, seed=0, dtype=np.float32, log=None):
    """Fit a :class:`CflNet` by MAE on z-scored step sizes.

    ``features`` come from :func:`build_features`; each batch gets fresh
    Gaussian input noise of standard deviation ``noise_level``.  Returns the
    model and the per-epoch mean training loss.
    """
    rng = np.random.default_rng(seed)
    features = np.asarray(features, dtype=dtype)
    target = stats.normalize_dt(dts).astype(dtype)
    if len(features) != len(target):
        raise ConfigurationError(f"{len(features)} inputs but {len(target)} targets")
    model = CflNet(features.shape[1], cfg.width, cfg.depth, cfg.pooling, seed=int(rng.integers(2**31)))
    model.astype(dtype)
    opt = Adam(model.parameters(), lr)
    n_steps = epochs * math.ceil(len(features) / batch_size)
    history, step = [], 0
    for epoch in range(epochs):
        total = 0.0
        for idx in _batches(len(features), batch_size, rng):
            x = features[idx]
            if noise_level:
                x = x + rng.normal(0.0, noise_level, size=x.shape).astype(dtype)
            opt.zero_grad()
            loss = ops.mae(model(Tensor(x)), target[idx])
            if not np.isfinite(loss.item()):
                raise DivergenceError(f"non-finite CFL training loss at epoch {epoch}", epoch)
            backward(loss)
            opt.step(cosine_lr(step, n_steps, lr))
            step += 1
            total += loss.item() * len(idx)
        history.append(total / len(features))
        if log:
            log(f"cfl {cfg.label} epoch {epoch + 1}/{epochs} mae {history[-1]:.4f}")
    return model, history


def predict_normalized(model: CflNet, features, batch_size=256):
    features = np.asarray(features, dtype=model.dtype)
    out = []
    with no_grad():
        for i in range(0, len(features), batch_size):
            out.append(model(Tensor(features[i:i + batch_size])).data)
    return np.concatenate(out).astype(np.float64)


def clamp_dt(raw, stats: NormStats):
    """De-normalize and clip to the training range (always positive)."""
    return np.clip(stats.denormalize_dt(raw), stats.dt_min, stats.dt_max)


def predict_dt(model: CflNet, state, cfg: CflNetConfig, stats: NormStats, gas: GasModel = AIR, spacing=None):
    """Step size in seconds for one field (float) or a stack of fields (array)."""
    single = isinstance(state, FlowField) or np.ndim(state) == 3
    dt = clamp_dt(predict_normalized(model, build_features(state, cfg, stats, gas, spacing)), stats)
    return float(dt[0]) if single else dt
