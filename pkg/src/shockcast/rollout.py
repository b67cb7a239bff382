"""Autoregressive two-phase inference and temporal interpolation onto reference times."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .dataset import NormStats
from .exceptions import ExtrapolationError, RunawayError
from .fields import AIR, FlowField, GasModel
from .neural_cfl import CflNetConfig, build_features, clamp_dt, predict_normalized
from .neural_solver import solver_forward

# predicted states are floored here before they feed the next step
MIN_DENSITY = 1e-6
MIN_TEMPERATURE = 1e-3
_TIME_RTOL = 1e-9


@dataclass
class RolloutResult:
    snapshots: np.ndarray            # (n, 4, nx, ny) physical units
    times: np.ndarray                # (n,), times[0] = 0
    interpolated: np.ndarray | None = None
    ref_times: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.times) != len(self.snapshots):
            raise ValueError(f"{len(self.times)} times for {len(self.snapshots)} snapshots")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("predicted times must be strictly increasing")

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def save(self, directory, name):
        """``<name>.shkc`` with the predicted snapshots and ``<name>_dt.csv`` with the step sequence."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        binio.write_case_file(directory / f"{name}.shkc", self.times, self.snapshots)
        write_dt_csv(directory / f"{name}_dt.csv", self.times)

    @classmethod
    def load(cls, directory, name):
        times, snaps = binio.read_case_file(Path(directory) / f"{name}.shkc")
        return cls(snaps.astype(np.float64), times)


def write_dt_csv(path, times, reference=None):
    """Columns ``step, t, dt`` (plus ``dt_true`` when a reference sequence of equal length is given)."""
    times = np.asarray(times, dtype=np.float64)
    dts = np.diff(times)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "dt"] + (["dt_true"] if reference is not None else []))
        for j, dt in enumerate(dts):
            row = [j, repr(float(times[j])), repr(float(dt))]
            if reference is not None:
                row.append(repr(float(reference[j])))
            w.writerow(row)


def shockcast_rollout(dt_predictor, stepper, u0, t_stop, max_steps=10_000):
    """Alternate ``dt = dt_predictor(u)`` and ``u = stepper(u, dt)`` until ``t >= t_stop``.

    ``u0`` is a ``(4, nx, ny)`` physical state (or a :class:`FlowField`) and is
    snapshot 0.  The loop stops after the first step reaching ``t_stop``
    (to a relative tolerance of 1e-9, so ``t_stop / k`` steps land exactly).
    """
    u = u0.stack() if isinstance(u0, FlowField) else np.asarray(u0, dtype=np.float64)
    snaps, times = [u], [0.0]
    t = 0.0
    while t < t_stop * (1 - _TIME_RTOL):
        if len(times) - 1 >= max_steps:
            raise RunawayError(f"rollout exceeded {max_steps} steps at t={t:.6g} < {t_stop:.6g}")
        dt = float(dt_predictor(u))
        if not dt > 0:
            raise RunawayError(f"non-positive predicted step {dt!r} at t={t:.6g}")
        u = np.asarray(stepper(u, dt), dtype=np.float64)
        t += dt
        snaps.append(u)
        times.append(t)
    return RolloutResult(np.stack(snaps), np.array(times))


def neural_dt_predictor(model, cfg: CflNetConfig, stats: NormStats, spacing, gas: GasModel = AIR):
    def predict(u):
        feats = build_features(u[None], cfg, stats, gas, spacing)
        return float(clamp_dt(predict_normalized(model, feats), stats)[0])
    return predict


def floor_state(u):
    u = np.array(u, dtype=np.float64)
    u[0] = np.maximum(u[0], MIN_DENSITY)
    u[3] = np.maximum(u[3], MIN_TEMPERATURE)
    return u


def neural_stepper(net, stats: NormStats):
    def step(u, dt):
        z = solver_forward(net, stats.normalize_fields(u)[None], stats.normalize_dt(dt))
        return floor_state(stats.denormalize_fields(z[0].astype(np.float64)))
    return step


def run_shockcast(cfl_model, cfl_cfg, net, stats, u0, t_stop, spacing, gas=AIR, max_steps=10_000):
    """Full neural rollout: learned timestep, then learned update, repeated."""
    return shockcast_rollout(neural_dt_predictor(cfl_model, cfl_cfg, stats, spacing, gas),
                             neural_stepper(net, stats), u0, t_stop, max_steps)


def interpolate_to_grid(result: RolloutResult, ref_times):
    """Cellwise linear interpolation in time; exact at predicted times."""
    ref = np.asarray(ref_times, dtype=np.float64)
    t = result.times
    tol = _TIME_RTOL * max(abs(t[-1]), 1.0)
    if np.any(ref < t[0] - tol) or np.any(ref > t[-1] + tol):
        bad = ref[(ref < t[0] - tol) | (ref > t[-1] + tol)][0]
        raise ExtrapolationError(f"reference time {bad:.6g} outside predicted coverage [{t[0]:.6g}, {t[-1]:.6g}]")
    out = np.empty((len(ref),) + result.snapshots.shape[1:], dtype=np.float64)
    for i, tq in enumerate(np.clip(ref, t[0], t[-1])):
        j = int(np.searchsorted(t, tq, side="left"))
        if j < len(t) and t[j] == tq:
            out[i] = result.snapshots[j]
            continue
        j = max(j, 1)
        w = (tq - t[j - 1]) / (t[j] - t[j - 1])
        out[i] = (1 - w) * result.snapshots[j - 1] + w * result.snapshots[j]
    result.interpolated, result.ref_times = out, ref
    return out


def resample_dt(times, dts, query_times):
    """Step-size sequence ``dts`` (piecewise constant on ``[times[j], times[j+1])``) evaluated at ``query_times``."""
    times = np.asarray(times, dtype=np.float64)
    idx = np.searchsorted(times, np.asarray(query_times, dtype=np.float64), side="right") - 1
    return np.asarray(dts)[np.clip(idx, 0, len(dts) - 1)]
