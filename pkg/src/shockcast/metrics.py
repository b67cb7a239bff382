"""Evaluation metrics: relative errors, correlation time, mean flow and turbulence kinetic energy."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DegenerateTrajectoryError, UndefinedCorrelationError
from .fields import FIELD_NAMES


def pearson(a, b) -> float:
    """Sample correlation over all cells."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    da, db = a - a.mean(), b - b.mean()
    na, nb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-300)
    if na <= 1e-12 * scale * math.sqrt(a.size) or nb <= 1e-12 * scale * math.sqrt(b.size):
        raise UndefinedCorrelationError("Pearson correlation undefined for a constant field")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def streak_proportion(correlations, times, threshold=0.9) -> float:
    """End of the initial run of ``correlation >= threshold`` as a fraction of ``times[-1]``.

    NaN entries (undefined correlation) count as below the threshold; a
    failure at the very first entry gives 0.
    """
    c = np.asarray(correlations, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    ok = np.where(np.isnan(c), False, c >= threshold)
    if not ok[0]:
        return 0.0
    last = len(ok) - 1 if ok.all() else int(np.argmin(ok)) - 1
    return float((times[last] - times[0]) / (times[-1] - times[0]))


def correlation_series(pred, truth):
    """``(n_t, n_fields)`` Pearson per snapshot and field; NaN where undefined."""
    out = np.full(pred.shape[:2], np.nan)
    for j in range(pred.shape[0]):
        for f in range(pred.shape[1]):
            try:
                out[j, f] = pearson(pred[j, f], truth[j, f])
            except UndefinedCorrelationError:
                pass
    return out


def correlation_time_proportion(pred, truth, times, threshold=0.9, initial_given=True):
    """Per-field correlation-time proportion and its mean over fields.

    ``pred``/``truth`` are ``(n_t, n_fields, nx, ny)`` on the same ``times``.
    With ``initial_given`` the first snapshot is the supplied initial
    condition and counts as correlated even where the correlation is
    undefined (a quiescent field).
    """
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or len(times) != pred.shape[0]:
        raise ValueError(f"misaligned inputs {pred.shape}, {truth.shape}, {len(times)} times")
    corr = correlation_series(pred, truth)
    if initial_given:
        corr[0] = np.where(np.isnan(corr[0]), 1.0, corr[0])
    per_field = np.array([streak_proportion(corr[:, f], times, threshold) for f in range(pred.shape[1])])
    return per_field, float(per_field.mean())


def trapezoid(values, times):
    """``sum_j (t_{j+1} - t_j) (f_{j+1} + f_j) / 2`` along the first axis."""
    values = np.asarray(values, dtype=np.float64)
    dt = np.diff(np.asarray(times, dtype=np.float64))
    shape = (-1,) + (1,) * (values.ndim - 1)
    return 0.5 * (dt.reshape(shape) * (values[1:] + values[:-1])).sum(axis=0)


def _check_series(snapshots, times):
    if len(snapshots) < 2:
        raise DegenerateTrajectoryError("time averages need at least two snapshots")
    times = np.asarray(times, dtype=np.float64)
    if len(times) != len(snapshots) or not np.all(np.diff(times) > 0):
        raise DegenerateTrajectoryError("times must be strictly increasing and match the snapshots")
    return times


def mean_flow(snapshots, times):
    """Time average of every field, ``(n_fields, nx, ny)``."""
    times = _check_series(snapshots, times)
    return trapezoid(snapshots, times) / (times[-1] - times[0])


def tke(snapshots, times, u_index=1, v_index=2):
    """``(1 / 2T) * trapezoid((u - mean u)^2 + (v - mean v)^2)`` per cell."""
    times = _check_series(snapshots, times)
    snapshots = np.asarray(snapshots, dtype=np.float64)
    span = times[-1] - times[0]
    u, v = snapshots[:, u_index], snapshots[:, v_index]
    ub, vb = trapezoid(u, times) / span, trapezoid(v, times) / span
    return trapezoid((u - ub) ** 2 + (v - vb) ** 2, times) / (2 * span)


def relative_error(pred, true, clamp=None) -> float:
    """``||pred - true|| / max(||true||, clamp)``; without ``clamp`` only a tiny floor guards zero fields."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {true.shape}")
    den = np.linalg.norm(true)
    den = max(den, clamp) if clamp is not None else max(den, 1e-300)
    return float(np.linalg.norm(pred - true) / den)


def per_field_relative_error(pred, true, clamp=None):
    """``(n_t, n_fields, ...)`` inputs -> per-field error averaged over snapshots."""
    pred, true = np.asarray(pred), np.asarray(true)
    clamp = clamp or {}
    out = np.zeros(pred.shape[1])
    for f in range(pred.shape[1]):
        c = clamp.get(FIELD_NAMES[f]) if isinstance(clamp, dict) else clamp
        out[f] = np.mean([relative_error(pred[j, f], true[j, f], c) for j in range(pred.shape[0])])
    return out


# ---------------------------------------------------------------- reports


@dataclass
class EvalReport:
    """Long-format ``(field, metric, value)`` rows for one model, case and seed."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, field_name, metric, value):
        self.rows.append((field_name, metric, float(value)))

    def value(self, field_name, metric):
        for f, m, v in self.rows:
            if f == field_name and m == metric:
                return v
        raise KeyError((field_name, metric))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["field", "metric", "value"])
            for f, m, v in self.rows:
                w.writerow([f, m, repr(v)])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            return cls([(f, m, float(v)) for f, m, v in r])


def build_report(one_step_pred, one_step_true, unrolled, truth, times, threshold=0.9, clamp=None):
    """All metrics for one eval case.

    ``one_step_*`` are ``(n, 4, nx, ny)`` teacher-forced predictions and
    targets; ``unrolled`` is the rollout interpolated onto ``times`` and
    ``truth`` the reference snapshots there.
    """
    rep = EvalReport()
    for name, v in zip(FIELD_NAMES, per_field_relative_error(one_step_pred, one_step_true, clamp)):
        rep.add(name, "one_step_rel_error", v)
    for name, v in zip(FIELD_NAMES, per_field_relative_error(unrolled, truth, clamp)):
        rep.add(name, "unrolled_rel_error", v)
    per_field, mean = correlation_time_proportion(unrolled, truth, times, threshold)
    for name, v in zip(FIELD_NAMES, per_field):
        rep.add(name, "correlation_time_proportion", v)
    rep.add("mean", "correlation_time_proportion", mean)
    mf_p, mf_t = mean_flow(unrolled, times), mean_flow(truth, times)
    for f, name in enumerate(FIELD_NAMES):
        rep.add(name, "mean_flow_rel_error", relative_error(mf_p[f], mf_t[f]))
    rep.add("tke", "tke_rel_error", relative_error(tke(unrolled, times), tke(truth, times)))
    return rep


def summarize(reports):
    """Mean, standard error and the 2-SE half-width of every ``(field, metric)`` across reports."""
    groups: dict = {}
    for rep in reports:
        for f, m, v in rep.rows:
            groups.setdefault((f, m), []).append(v)
    out = []
    for (f, m), vals in groups.items():
        vals = np.asarray(vals)
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append({"field": f, "metric": m, "n": len(vals), "mean": float(vals.mean()),
                    "stderr": se, "two_stderr": 2 * se})
    return out


def write_summary(path, summary, meta=None):
    Path(path).write_text(json.dumps({"meta": meta or {}, "rows": summary}, indent=2, sort_keys=True) + "\n")
