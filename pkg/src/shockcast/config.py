"""Run configuration: defaults, JSON loading, and deterministic seed fan-out."""

from __future__ import annotations

import copy
import json
import os
import zlib
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError

THREADS_ENV = "SHOCKCAST_THREADS"

DESK_CONFIG = {
    "data": {
        "n_cases": 20,
        "n_eval": 2,
        "pressure_ratio_range": [2.0, 20.0],
        "nx": 64,
        "ny": 64,
        "extent": 0.25,
        "r_blast_fraction": 0.2,
        "t_end": 5e-3,
        "courant": 0.8,
        "flux": "hllc",
        "reconstruction": "muscl_minmod",
        "coarsen_time": 10,
        "coarsen_space": 2,
    },
    "cfl": {
        # the base and +CFL max-pool variants get extra replicates for the seed comparison
        "variants": [
            {"use_gradient_features": g, "use_cfl_features": c, "pooling": p,
             "replicates": 3 if (p == "max" and not g) else 1}
            for p in ("max", "mean") for g in (False, True) for c in (False, True)
        ],
        "width": 8,
        "depth": 3,
        "epochs": 20,
        "batch_size": 64,
        "lr": 2e-3,
        "noise_level": 0.01,
    },
    "solver": {
        "models": [
            {"trunk": "unet_lite", "conditioning": "cond_layer_norm"},
            {"trunk": "unet_lite", "conditioning": "euler_residual"},
            {"trunk": "unet_lite", "conditioning": "moe"},
            {"trunk": "ffno_lite", "conditioning": "spatial_spectral"},
            {"trunk": "ffno_lite", "conditioning": "cond_layer_norm"},
            {"trunk": "ffno_lite", "conditioning": "euler_residual"},
            {"trunk": "ffno_lite", "conditioning": "moe"},
        ],
        "width": {"unet_lite": 12, "ffno_lite": 16},
        "lr": {"unet_lite": 2e-3, "ffno_lite": 2e-3},
        "epochs": 20,
        "batch_size": 16,
        "modes": 8,
        "n_layers": 4,
        "n_experts": 4,
        "scale_moe_width": True,
        "noise_level": 0.0,
        "replicates": 1,
    },
    "rollout": {
        "cfl_variant": {"use_gradient_features": True, "use_cfl_features": True, "pooling": "max"},
        "budget_factor": 4,
    },
    "evaluate": {"correlation_threshold": 0.9},
    "plot": {"case": None, "model": None, "snapshot_stride": 10, "pixel_scale": 4},
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise ConfigurationError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict) and k not in ("width", "lr"):
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(override: dict | None = None) -> dict:
    """Desk defaults updated by ``override`` (unknown keys are rejected)."""
    return _merge(DESK_CONFIG, override or {})


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path}: top level must be an object")
    return resolve_config(raw)


def dump_config(cfg: dict, path):
    Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def derive_seed(master: int, *tags) -> int:
    """Stable 32-bit seed for a named consumer of the master seed."""
    words = [int(master) & 0xFFFFFFFF, (int(master) >> 32) & 0xFFFFFFFF]
    words += [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n
