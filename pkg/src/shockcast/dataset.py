"""Coarsening, normalisation statistics, splits and on-disk layout of blast datasets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .euler import Trajectory
from .exceptions import ConfigurationError, DegenerateTrajectoryError, FormatError
from .features import cfl_channels, gradient_channels
from .fields import FIELD_NAMES, FlowField, GasModel, Grid2D

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass
class CaseManifest:
    case_id: str
    pressure_ratio: float
    r_blast: float
    solver_grid: dict
    coarsen_time: int
    coarsen_space: int
    split: str
    file: str
    n_snapshots: int = 0
    nx: int = 0
    ny: int = 0
    t_end: float = 0.0
    n_solver_steps: int = 0
    header_bytes: int = binio.CASE_HEADER.size
    times_offset: int = binio.CASE_HEADER.size
    data_offset: int = 0

    def __post_init__(self):
        if self.coarsen_time < 1:
            raise ConfigurationError(f"{self.case_id}: coarsen_time must be >= 1")
        if self.coarsen_space < 1:
            raise ConfigurationError(f"{self.case_id}: coarsen_space must be >= 1")
        g = self.solver_grid
        if g["nx"] % self.coarsen_space or g["ny"] % self.coarsen_space:
            raise ConfigurationError(f"{self.case_id}: coarsen_space {self.coarsen_space} does not divide solver grid")
        if self.split not in ("train", "eval"):
            raise ConfigurationError(f"{self.case_id}: split must be 'train' or 'eval', got {self.split!r}")

    @property
    def grid(self) -> Grid2D:
        g = self.solver_grid
        return Grid2D(g["nx"], g["ny"], g["dx"], g["dy"]).coarsen(self.coarsen_space)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class NormStats:
    """Z-score statistics; every std is over the training split only."""

    field_mean: np.ndarray
    field_std: np.ndarray
    dt_mean: float
    dt_std: float
    dt_min: float
    dt_max: float
    grad_mean: np.ndarray | None = None
    grad_std: np.ndarray | None = None
    cfl_mean: np.ndarray | None = None
    cfl_std: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def normalize_fields(self, x):
        return (x - self.field_mean[:, None, None]) / self.field_std[:, None, None]

    def denormalize_fields(self, z):
        return z * self.field_std[:, None, None] + self.field_mean[:, None, None]

    def normalize_dt(self, dt):
        return (np.asarray(dt, dtype=np.float64) - self.dt_mean) / self.dt_std

    def denormalize_dt(self, z):
        return np.asarray(z, dtype=np.float64) * self.dt_std + self.dt_mean

    def to_dict(self):
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("field_mean", "field_std", "grad_mean", "grad_std", "cfl_mean", "cfl_std"):
            if d.get(k) is not None:
                d[k] = np.asarray(d[k], dtype=np.float64)
        return cls(**d)


def block_average(arr, factor: int):
    """Average non-overlapping ``factor x factor`` blocks over the last two axes."""
    arr = np.asarray(arr)
    if factor == 1:
        return arr.copy()
    *lead, nx, ny = arr.shape
    if nx % factor or ny % factor:
        raise ValueError(f"factor {factor} does not divide {nx}x{ny}")
    return arr.reshape(*lead, nx // factor, factor, ny // factor, factor).mean(axis=(-3, -1))


def coarsen_trajectory(traj: Trajectory, time_stride: int, space_factor: int = 1) -> Trajectory:
    """Keep every ``time_stride``-th snapshot (anchored at 0, final always kept) and block-average."""
    if time_stride < 1:
        raise ValueError("time_stride must be >= 1")
    n = len(traj)
    keep = list(range(0, n, time_stride))
    if keep[-1] != n - 1:
        keep.append(n - 1)
    if len(keep) < 2:
        raise DegenerateTrajectoryError(f"only {len(keep)} snapshot(s) survive coarsening")
    grid = traj.grid.coarsen(space_factor)
    snaps = [FlowField.from_stack(grid, block_average(traj.snapshots[i].stack(), space_factor), check=False)
             for i in keep]
    return Trajectory(snaps, traj.times[keep])


def _moments(chunks, what):
    data = np.concatenate([c.reshape(c.shape[0], -1) for c in chunks], axis=1)
    mean = data.mean(axis=1)
    std = data.std(axis=1, ddof=1)
    if not np.all(std > 0):
        bad = [i for i, s in enumerate(std) if not s > 0]
        raise ConfigurationError(f"zero variance in {what} channel(s) {bad}")
    return mean, std


def compute_norm_stats(train: list, gas: GasModel) -> NormStats:
    """Statistics over every cell and snapshot of the training trajectories."""
    if not train:
        raise ConfigurationError("need at least one training case")
    spacing = {(t.grid.dx, t.grid.dy) for t in train}
    if len(spacing) != 1:
        raise ConfigurationError(f"training cases disagree on grid spacing: {sorted(spacing)}")
    dts = np.concatenate([step_targets(t)[1] for t in train])
    return norm_stats_from_arrays([t.stacked() for t in train], dts, gas, spacing.pop())


def norm_stats_from_arrays(states, dts, gas: GasModel, spacing) -> NormStats:
    """Statistics from ``(N, 4, nx, ny)`` physical states (or a list of such blocks) and step sizes."""
    stacks = [np.asarray(s, dtype=np.float64) for s in (states if isinstance(states, (list, tuple)) else [states])]
    fm, fs = _moments([s.transpose(1, 0, 2, 3) for s in stacks], "field")
    gm, gs = _moments([gradient_channels(s, *spacing).transpose(1, 0, 2, 3) for s in stacks], "gradient")
    cm, cs = _moments([cfl_channels(s, gas).transpose(1, 0, 2, 3) for s in stacks], "cfl")
    dts = np.asarray(dts, dtype=np.float64)
    if len(dts) < 2 or not dts.std(ddof=1) > 0:
        raise ConfigurationError("zero variance in training timesteps")
    return NormStats(field_mean=fm, field_std=fs, dt_mean=float(dts.mean()), dt_std=float(dts.std(ddof=1)),
                     dt_min=float(dts.min()), dt_max=float(dts.max()),
                     grad_mean=gm, grad_std=gs, cfl_mean=cm, cfl_std=cs)


def split_cases(n_cases: int, n_eval: int) -> list[str]:
    """Spread eval cases evenly through the interior of the parameter sweep."""
    if not 0 < n_eval < n_cases:
        raise ConfigurationError(f"need 0 < n_eval < n_cases, got {n_eval} of {n_cases}")
    eval_idx = {int(round(x)) for x in np.linspace(0, n_cases - 1, n_eval + 2)[1:-1]}
    return ["eval" if i in eval_idx else "train" for i in range(n_cases)]


# ---------------------------------------------------------------- disk I/O


def write_case(path, manifest: CaseManifest, traj: Trajectory) -> CaseManifest:
    """Write ``traj`` in the SHKC container; fills the manifest's shape and offset fields."""
    data = traj.stacked()
    n, _, nx, ny = data.shape
    manifest.n_snapshots, manifest.nx, manifest.ny = n, nx, ny
    manifest.t_end = float(traj.times[-1])
    manifest.header_bytes = binio.CASE_HEADER.size
    manifest.times_offset = binio.CASE_HEADER.size
    manifest.data_offset = binio.CASE_HEADER.size + 8 * n
    binio.write_case_file(path, traj.times, data)
    return manifest


def read_case(path, manifest: CaseManifest) -> Trajectory:
    times, data = binio.read_case_file(path)
    n, nf, nx, ny = data.shape
    expected = (manifest.n_snapshots, len(FIELD_NAMES), manifest.nx, manifest.ny)
    if (n, nf, nx, ny) != expected:
        raise FormatError(f"{path}: shape {(n, nf, nx, ny)} does not match manifest {expected}")
    grid = manifest.grid
    snaps = [FlowField.from_stack(grid, d.astype(np.float64), check=False) for d in data]
    return Trajectory(snaps, times)


def write_manifest(directory, manifests, meta: dict | None = None):
    payload = {"version": MANIFEST_VERSION, "fields": list(FIELD_NAMES), "meta": meta or {},
               "cases": [m.to_dict() for m in manifests]}
    Path(directory, MANIFEST_NAME).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(directory):
    path = Path(directory, MANIFEST_NAME)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if payload.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {payload.get('version')}")
    return [CaseManifest.from_dict(c) for c in payload["cases"]], payload.get("meta", {})


@dataclass
class Case:
    manifest: CaseManifest
    trajectory: Trajectory


def load_dataset(directory) -> list[Case]:
    manifests, _ = read_manifest(directory)
    return [Case(m, read_case(Path(directory, m.file), m)) for m in manifests]


def one_step_pairs(trajectories):
    """Stack ``(u_j, dt_j, u_{j+1})`` over all consecutive pairs of every trajectory."""
    xs, dts, ys = [], [], []
    for t in trajectories:
        s = t.stacked()
        xs.append(s[:-1])
        ys.append(s[1:])
        dts.append(t.dts)
    return np.concatenate(xs), np.concatenate(dts), np.concatenate(ys)


def step_targets(traj):
    """``(states, dts)`` for learning the step size.

    The final interval of a trajectory is the remainder up to the end time,
    not a stability-limited step, so it is left out.
    """
    s = traj.stacked()
    return s[:-2], traj.dts[:-1]


def step_target_pairs(trajectories):
    states, dts = zip(*(step_targets(t) for t in trajectories))
    return np.concatenate(states), np.concatenate(dts)
