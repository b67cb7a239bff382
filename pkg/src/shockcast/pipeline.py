"""End-to-end stages behind the command line: generate, train, roll out, evaluate, plot."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics
from .config import derive_seed, dump_config
from .dataset import (CaseManifest, coarsen_trajectory, compute_norm_stats, load_dataset, one_step_pairs,
                      split_cases, step_target_pairs, write_case, write_manifest)
from .estimators import NeuralCFL, NeuralSolver
from .euler import SolverConfig, init_circular_blast, simulate
from .exceptions import ConfigurationError, FormatError, UndefinedCorrelationError
from .fields import AIR, FIELD_NAMES, Grid2D
from .plotting import comparison_image, write_ppm
from .rollout import RolloutResult, floor_state, interpolate_to_grid, resample_dt, shockcast_rollout, write_dt_csv

STAGE_DIRS = {"generate": "data", "train-cfl": "cfl", "train-solver": "solver", "rollout": "rollout",
              "evaluate": "eval", "plot": "plots"}

logger = logging.getLogger(__name__)


def case_parameters(data_cfg):
    lo, hi = data_cfg["pressure_ratio_range"]
    ratios = np.geomspace(lo, hi, data_cfg["n_cases"])
    splits = split_cases(data_cfg["n_cases"], data_cfg["n_eval"])
    return [(f"case_{i:03d}", float(r), s) for i, (r, s) in enumerate(zip(ratios, splits))]


def solver_grid(data_cfg) -> Grid2D:
    nx, ny = data_cfg["nx"], data_cfg["ny"]
    return Grid2D(nx, ny, data_cfg["extent"] / nx, data_cfg["extent"] / ny)


def solver_config(data_cfg) -> SolverConfig:
    return SolverConfig(gas=AIR, courant=data_cfg["courant"], flux=data_cfg["flux"],
                        reconstruction=data_cfg["reconstruction"], t_end=data_cfg["t_end"])


def simulate_case(data_cfg, pressure_ratio):
    grid = solver_grid(data_cfg)
    init = init_circular_blast(grid, pressure_ratio, AIR, r_blast=data_cfg["r_blast_fraction"] * data_cfg["extent"])
    return simulate(init, solver_config(data_cfg))


def _generate_one(args):
    data_cfg, case_id, ratio, split, out_dir = args
    traj = simulate_case(data_cfg, ratio)
    coarse = coarsen_trajectory(traj, data_cfg["coarsen_time"], data_cfg["coarsen_space"])
    grid = solver_grid(data_cfg)
    manifest = CaseManifest(case_id=case_id, pressure_ratio=ratio,
                            r_blast=data_cfg["r_blast_fraction"] * data_cfg["extent"],
                            solver_grid={"nx": grid.nx, "ny": grid.ny, "dx": grid.dx, "dy": grid.dy},
                            coarsen_time=data_cfg["coarsen_time"], coarsen_space=data_cfg["coarsen_space"],
                            split=split, file=f"{case_id}.shkc", n_solver_steps=len(traj) - 1)
    return write_case(Path(out_dir, manifest.file), manifest, coarse)


def generate(cfg, out_dir, workers=1, log=logger.info):
    """Simulate every case of the sweep, coarsen, and write ``SHKC`` files plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out_dir / "config.json")
    data_cfg = cfg["data"]
    jobs = [(data_cfg, cid, r, s, str(out_dir)) for cid, r, s in case_parameters(data_cfg)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            manifests = list(pool.map(_generate_one, jobs))
    else:
        manifests = []
        for job in jobs:
            manifests.append(_generate_one(job))
            m = manifests[-1]
            log(f"generated {m.case_id} ratio {m.pressure_ratio:.3g}: {m.n_solver_steps} solver steps, "
                f"{m.n_snapshots} snapshots ({m.split})")
    write_manifest(out_dir, manifests, {"data": data_cfg})
    return manifests


# ---------------------------------------------------------------- shared plumbing


def stage_dir(root, stage) -> Path:
    return Path(root) / STAGE_DIRS[stage]


def _begin(root, stage, cfg, seed):
    d = stage_dir(root, stage)
    d.mkdir(parents=True, exist_ok=True)
    dump_config({**cfg, "seed": int(seed)}, d / "config.json")
    return d


def _load_split(root):
    data = stage_dir(root, "generate")
    if not (data / "manifest.json").exists():
        raise FormatError(f"no dataset at {data}; run generate first")
    cases = load_dataset(data)
    train = [c for c in cases if c.manifest.split == "train"]
    evals = [c for c in cases if c.manifest.split == "eval"]
    if not train or not evals:
        raise FormatError(f"dataset at {data} needs both train and eval cases")
    return train, evals


def _spacing(cases):
    g = cases[0].manifest.grid
    return (g.dx, g.dy)


def cfl_label(variant) -> str:
    """File-safe name such as ``base+cfl-max``."""
    parts = ["base"] + [n for k, n in (("use_gradient_features", "grad"), ("use_cfl_features", "cfl"))
                        if variant.get(k)]
    return "+".join(parts) + "-" + variant.get("pooling", "max")


def solver_label(model) -> str:
    return f"{model['trunk']}-{model['conditioning']}"


def cfl_runs(cfg):
    """``(label, replicate, variant)`` for every CFL model the config asks for."""
    out = []
    for v in cfg["cfl"]["variants"]:
        for r in range(int(v.get("replicates", 1))):
            out.append((cfl_label(v), r, v))
    return out


def solver_runs(cfg):
    return [(solver_label(m), r, m) for m in cfg["solver"]["models"] for r in range(int(cfg["solver"]["replicates"]))]


def _run_name(label, replicate):
    return f"{label}_r{replicate}"


# ---------------------------------------------------------------- training


def train_cfl_stage(cfg, root, seed=0, log=logger.info):
    """Train every configured CFL variant and replicate; one checkpoint each."""
    out = _begin(root, "train-cfl", cfg, seed)
    train, _ = _load_split(root)
    stats = compute_norm_stats([c.trajectory for c in train], AIR)
    X, dts = step_target_pairs([c.trajectory for c in train])
    c = cfg["cfl"]
    names = []
    for label, r, v in cfl_runs(cfg):
        run_seed = derive_seed(seed, "cfl", label, r)
        est = NeuralCFL(v.get("use_gradient_features", False), v.get("use_cfl_features", False),
                        v.get("pooling", "max"), c["width"], c["depth"], c["epochs"], c["batch_size"], c["lr"],
                        c["noise_level"], run_seed, _spacing(train), stats=stats).fit(X, dts)
        name = _run_name(label, r)
        est.save(out, name, {"label": label, "replicate": r, "variant": v})
        log(f"trained cfl {name}: final train mae {est.history_[-1]:.4f}")
        names.append(name)
    return names


def train_solver_stage(cfg, root, seed=0, log=logger.info):
    """Train every configured (trunk, conditioning) pair and replicate."""
    out = _begin(root, "train-solver", cfg, seed)
    train, _ = _load_split(root)
    stats = compute_norm_stats([c.trajectory for c in train], AIR)
    X, dts, Y = one_step_pairs([c.trajectory for c in train])
    c = cfg["solver"]
    names = []
    for label, r, m in solver_runs(cfg):
        trunk = m["trunk"]
        if trunk not in c["width"] or trunk not in c["lr"]:
            raise ConfigurationError(f"solver width/lr missing for trunk {trunk!r}")
        run_seed = derive_seed(seed, "solver", label, r)
        est = NeuralSolver(trunk, m["conditioning"], c["width"][trunk], c["modes"], c["n_layers"], c["n_experts"],
                           c["scale_moe_width"], c["epochs"], c["batch_size"], c["lr"][trunk], c["noise_level"],
                           run_seed, stats=stats, spacing=_spacing(train)).fit(X, Y, dts)
        name = _run_name(label, r)
        est.save(out, name, {"label": label, "replicate": r, "model": m})
        log(f"trained solver {name}: final train loss {est.history_[-1]:.4f}")
        names.append(name)
    return names


def _load_cfl(root, label, replicate):
    return NeuralCFL.load(stage_dir(root, "train-cfl"), _run_name(label, replicate))


def _load_solver(root, label, replicate):
    return NeuralSolver.load(stage_dir(root, "train-solver"), _run_name(label, replicate))


# ---------------------------------------------------------------- rollout


def step_budget(cfg, train):
    return int(cfg["rollout"]["budget_factor"]) * max(len(c.trajectory) for c in train)


def _cfl_for_rollout(cfg):
    variant = cfg["rollout"]["cfl_variant"]
    label = cfl_label(variant)
    reps = [r for lab, r, _ in cfl_runs(cfg) if lab == label]
    if not reps:
        raise ConfigurationError(f"rollout CFL variant {label} is not among the trained variants")
    return label, len(reps)


def rollout_stage(cfg, root, seed=0, log=logger.info):
    """Unroll every solver checkpoint on every eval case with the configured CFL model.

    Solver replicate ``r`` is paired with CFL replicate ``min(r, n - 1)``.
    """
    out = _begin(root, "rollout", cfg, seed)
    train, evals = _load_split(root)
    budget = step_budget(cfg, train)
    cfl_lab, n_cfl = _cfl_for_rollout(cfg)
    written = []
    for label, r, _ in solver_runs(cfg):
        cfl = _load_cfl(root, cfl_lab, min(r, n_cfl - 1))
        solver = _load_solver(root, label, r)
        run_dir = out / _run_name(label, r)
        for case in evals:
            traj = case.trajectory
            res = shockcast_rollout(lambda u: float(cfl.predict(u[None])[0]),
                                    lambda u, dt: solver_step(solver, u, dt), traj.snapshots[0].stack(),
                                    float(traj.times[-1]), budget)
            res.save(run_dir, case.manifest.case_id)
            true_dt = resample_dt(traj.times, traj.dts, res.times[:-1])
            write_dt_csv(run_dir / f"{case.manifest.case_id}_dt.csv", res.times, true_dt)
            log(f"rollout {_run_name(label, r)} {case.manifest.case_id}: {res.n_steps} steps")
            written.append(run_dir / case.manifest.case_id)
    return written


def solver_step(solver: NeuralSolver, u, dt):
    return floor_state(solver.predict(u[None], dt)[0])


# ---------------------------------------------------------------- evaluation


def _summary_rows(groups):
    rows = []
    for key, reports in groups.items():
        for row in metrics.summarize(reports):
            rows.append({"model": key, **row})
    return rows


def evaluate_stage(cfg, root, seed=0, log=logger.info):
    """Per-run CSV reports plus ``summary.json`` (mean, standard error, 2 SE over cases and replicates)."""
    out = _begin(root, "evaluate", cfg, seed)
    train, evals = _load_split(root)
    threshold = cfg["evaluate"]["correlation_threshold"]

    cfl_groups = {}
    with open(out / "cfl_mae.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "replicate", "mae", "baseline_mae"])
        Xe, de = step_target_pairs([c.trajectory for c in evals])
        for label, r, _ in cfl_runs(cfg):
            est = _load_cfl(root, label, r)
            mae, base = est.normalized_mae(Xe, de), est.baseline_mae(de)
            w.writerow([label, r, repr(mae), repr(base)])
            rep = metrics.EvalReport()
            rep.add("dt", "normalized_mae", mae)
            rep.add("dt", "baseline_mae", base)
            cfl_groups.setdefault(f"cfl/{label}", []).append(rep)

    solver_groups = {}
    for label, r, _ in solver_runs(cfg):
        solver = _load_solver(root, label, r)
        for case in evals:
            traj, cid = case.trajectory, case.manifest.case_id
            X, dts, Y = one_step_pairs([traj])
            one_step = solver.predict(X, dts)
            res = RolloutResult.load(stage_dir(root, "rollout") / _run_name(label, r), cid)
            unrolled = interpolate_to_grid(res, traj.times)
            rep = metrics.build_report(one_step, Y, unrolled, traj.stacked(), traj.times, threshold)
            rep.add("one_step", "normalized_loss", solver.one_step_loss(X, Y, dts))
            rep.add("one_step", "identity_loss", solver.identity_loss(X, Y))
            try:
                rep.add("dt", "dt_pearson", dt_tracking(res, traj))
            except UndefinedCorrelationError:
                rep.add("dt", "dt_pearson", float("nan"))
            rep.add("rollout", "n_steps", res.n_steps)
            rep.write_csv(out / f"{_run_name(label, r)}_{cid}.csv")
            solver_groups.setdefault(f"solver/{label}", []).append(rep)
            log(f"evaluated {_run_name(label, r)} {cid}: correlation time "
                f"{rep.value('mean', 'correlation_time_proportion'):.3f}")

    rows = _summary_rows(cfl_groups) + _summary_rows(solver_groups)
    metrics.write_summary(out / "summary.json", rows, {"threshold": threshold,
                                                       "eval_cases": [c.manifest.case_id for c in evals]})
    return rows


def dt_tracking(res: RolloutResult, traj):
    """Pearson between predicted steps and the reference coarse steps at the predicted times.

    The last predicted step and the reference remainder step are left out;
    both are truncated by the end time rather than set by the flow.
    """
    pred = res.dts[:-1]
    true = resample_dt(traj.times[:-1], traj.dts[:-1], res.times[:-2])
    if len(pred) < 2:
        raise UndefinedCorrelationError("too few predicted steps for a correlation")
    return metrics.pearson(pred, true)


# ---------------------------------------------------------------- plots


def plot_stage(cfg, root, seed=0, log=logger.info):
    """PPM panels (truth | prediction | residual per field) at strided snapshots, and the step-size CSV."""
    out = _begin(root, "plot", cfg, seed)
    _, evals = _load_split(root)
    p = cfg["plot"]
    case = evals[0] if p["case"] is None else next((c for c in evals if c.manifest.case_id == p["case"]), None)
    if case is None:
        raise ConfigurationError(f"plot case {p['case']!r} is not an eval case")
    label = p["model"] or solver_label(cfg["solver"]["models"][0])
    traj, cid = case.trajectory, case.manifest.case_id
    res = RolloutResult.load(stage_dir(root, "rollout") / _run_name(label, 0), cid)
    pred = interpolate_to_grid(res, traj.times)
    truth = traj.stacked()
    written = []
    picks = list(range(0, len(truth), p["snapshot_stride"]))
    if picks[-1] != len(truth) - 1:
        picks.append(len(truth) - 1)
    for j in picks:
        path = out / f"{label}_{cid}_{j:04d}.ppm"
        write_ppm(path, comparison_image(truth[j], pred[j], p["pixel_scale"]))
        written.append(path)
    write_dt_csv(out / f"{label}_{cid}_dt.csv", res.times, resample_dt(traj.times, traj.dts, res.times[:-1]))
    log(f"wrote {len(written)} images for {label} on {cid} ({', '.join(FIELD_NAMES)} by row)")
    return written
