"""Estimator-style wrappers (``fit`` / ``predict`` / ``get_params``) around the two learned models."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import checkpoint
from .dataset import NormStats, norm_stats_from_arrays
from .exceptions import ConfigurationError, DomainError, ShapeError
from .fields import AIR, N_FIELDS, GasModel
from .models import SolverNet
from .neural_cfl import CflNetConfig, build_features, clamp_dt, predict_normalized, train_cfl
from .neural_solver import identity_baseline, relative_loss, solver_forward, train_solver


def check_states(states, name="states"):
    """``(N, 4, nx, ny)`` finite float64 physical states with positive density and temperature."""
    arr = np.asarray(states, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != N_FIELDS:
        raise ShapeError(f"{name} must be (N, {N_FIELDS}, nx, ny)", arr.shape)
    if len(arr) == 0:
        raise ShapeError(f"{name} is empty", arr.shape)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contain non-finite values")
    if np.any(arr[:, 0] <= 0) or np.any(arr[:, 3] <= 0):
        raise DomainError(f"{name} need positive density and temperature")
    return arr


def check_steps(dts, n, name="dt"):
    """``(n,)`` finite positive step sizes; a scalar is broadcast."""
    arr = np.asarray(dts, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ShapeError(f"{name} must have one entry per state", arr.shape, (n,))
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and positive")
    return arr


def _spacing(spacing):
    if spacing is None:
        raise ConfigurationError("grid spacing (dx, dy) is required")
    dx, dy = (float(s) for s in spacing)
    if not (dx > 0 and dy > 0):
        raise ConfigurationError(f"grid spacing must be positive, got {spacing}")
    return dx, dy


class NeuralCFL(RegressorMixin, BaseEstimator):
    """Learned step-size model.  ``fit(states, dt)`` then ``predict(states) -> dt`` in seconds.

    When ``stats`` is ``None`` the normalization is computed from the
    training arrays passed to ``fit``.
    """

    def __init__(self, use_gradient_features=False, use_cfl_features=False, pooling="max", width=8, depth=3,
                 epochs=20, batch_size=64, lr=2e-3, noise_level=0.01, random_state=0, spacing=None,
                 gas: GasModel = AIR, stats: NormStats | None = None, verbose=False):
        self.use_gradient_features = use_gradient_features
        self.use_cfl_features = use_cfl_features
        self.pooling = pooling
        self.width = width
        self.depth = depth
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.noise_level = noise_level
        self.random_state = random_state
        self.spacing = spacing
        self.gas = gas
        self.stats = stats
        self.verbose = verbose

    @property
    def config(self) -> CflNetConfig:
        return CflNetConfig(self.use_gradient_features, self.use_cfl_features, self.pooling, self.width, self.depth)

    def fit(self, X, y):
        X = check_states(X)
        y = check_steps(y, len(X))
        cfg, spacing = self.config, _spacing(self.spacing)
        self.stats_ = self.stats if self.stats is not None else norm_stats_from_arrays(X, y, self.gas, spacing)
        feats = build_features(X, cfg, self.stats_, self.gas, spacing)
        self.model_, self.history_ = train_cfl(feats, y, cfg, self.stats_, self.epochs, self.batch_size, self.lr,
                                               self.noise_level, self.random_state,
                                               log=print if self.verbose else None)
        self.n_features_in_ = feats.shape[1]
        return self

    def predict_normalized(self, X):
        check_is_fitted(self, "model_")
        feats = build_features(check_states(X), self.config, self.stats_, self.gas, _spacing(self.spacing))
        return predict_normalized(self.model_, feats)

    def predict(self, X):
        return clamp_dt(self.predict_normalized(X), self.stats_)

    def normalized_mae(self, X, y):
        """Mean absolute error of the z-scored step size (the training objective)."""
        y = check_steps(y, len(check_states(X)))
        return float(np.mean(np.abs(self.predict_normalized(X) - self.stats_.normalize_dt(y))))

    def baseline_mae(self, y):
        """Error of always predicting the training mean."""
        check_is_fitted(self, "model_")
        return float(np.mean(np.abs(self.stats_.normalize_dt(check_steps(y, len(np.atleast_1d(y)))))))

    def save(self, directory, name, extra=None):
        check_is_fitted(self, "model_")
        meta = {"kind": "neural_cfl", "params": _jsonable_params(self),
                "architecture": {"in_channels": self.n_features_in_, "width": self.width, "depth": self.depth,
                                 "pooling": self.pooling},
                "stats": self.stats_.to_dict(), "history": list(self.history_), **(extra or {})}
        checkpoint.save_module(directory, name, self.model_, meta)

    @classmethod
    def load(cls, directory, name, gas: GasModel = AIR):
        model, meta, stats = checkpoint.load_cfl(directory, name)
        params = dict(meta["params"])
        est = cls(**params, gas=gas, stats=stats)
        est.model_, est.stats_, est.history_ = model, stats, meta.get("history", [])
        est.n_features_in_ = meta["architecture"]["in_channels"]
        return est


class NeuralSolver(BaseEstimator):
    """Step-conditioned surrogate.  ``fit(states, next_states, dt=...)``; ``predict(states, dt)``."""

    def __init__(self, trunk="unet_lite", conditioning=None, width=12, modes=8, n_layers=4, n_experts=4,
                 scale_moe_width=True, epochs=12, batch_size=16, lr=2e-3, noise_level=0.0, random_state=0,
                 stats: NormStats | None = None, spacing=None, gas: GasModel = AIR, verbose=False):
        self.trunk = trunk
        self.conditioning = conditioning
        self.width = width
        self.modes = modes
        self.n_layers = n_layers
        self.n_experts = n_experts
        self.scale_moe_width = scale_moe_width
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.noise_level = noise_level
        self.random_state = random_state
        self.stats = stats
        self.spacing = spacing
        self.gas = gas
        self.verbose = verbose

    def _architecture(self):
        return {"trunk": self.trunk, "conditioning": self.conditioning, "width": self.width, "modes": self.modes,
                "n_layers": self.n_layers, "n_experts": self.n_experts, "scale_moe_width": self.scale_moe_width,
                "seed": int(self.random_state)}

    def fit(self, X, y, dt):
        X = check_states(X)
        y = check_states(y, "next states")
        if y.shape != X.shape:
            raise ShapeError("next states must match states", X.shape, y.shape)
        dt = check_steps(dt, len(X))
        if self.stats is not None:
            self.stats_ = self.stats
        else:
            self.stats_ = norm_stats_from_arrays([X, y[-1:]], dt, self.gas, _spacing(self.spacing))
        net = SolverNet(**self._architecture())
        net.astype(np.float32)
        self.net_, self.history_ = train_solver(net, X, dt, y, self.stats_, self.epochs, self.batch_size, self.lr,
                                                self.noise_level, self.random_state,
                                                log=print if self.verbose else None)
        return self

    def predict_normalized(self, X, dt):
        check_is_fitted(self, "net_")
        X = check_states(X)
        return solver_forward(self.net_, self.stats_.normalize_fields(X), self.stats_.normalize_dt(
            check_steps(dt, len(X)))).astype(np.float64)

    def predict(self, X, dt):
        return self.stats_.denormalize_fields(self.predict_normalized(X, dt))

    def one_step_loss(self, X, y, dt):
        """Mean relative error in normalized space, the training objective."""
        y = check_states(y, "next states")
        return relative_loss(self.predict_normalized(X, dt), self.stats_.normalize_fields(y))

    def identity_loss(self, X, y):
        """The no-change baseline on the same pairs."""
        check_is_fitted(self, "net_")
        return identity_baseline(self.stats_.normalize_fields(check_states(X)),
                                 self.stats_.normalize_fields(check_states(y, "next states")))

    def save(self, directory, name, extra=None):
        check_is_fitted(self, "net_")
        meta = {"kind": "neural_solver", "params": _jsonable_params(self), "architecture": self._architecture(),
                "stats": self.stats_.to_dict(), "history": list(self.history_), **(extra or {})}
        checkpoint.save_module(directory, name, self.net_, meta)

    @classmethod
    def load(cls, directory, name, gas: GasModel = AIR):
        net, meta, stats = checkpoint.load_solver(directory, name)
        est = cls(**meta["params"], gas=gas, stats=stats)
        est.net_, est.stats_, est.history_ = net, stats, meta.get("history", [])
        return est


def _jsonable_params(est):
    skip = {"stats", "gas", "verbose"}
    out = {}
    for k, v in est.get_params().items():
        if k in skip:
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out
