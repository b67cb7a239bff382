"""Model checkpoints: ``<name>.shkp`` holds the weights, ``<name>.json`` the metadata needed to rebuild."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import binio
from .dataset import NormStats
from .exceptions import FormatError
from .models import CflNet, SolverNet
from .nn import Module


def save_module(directory, name, module: Module, meta: dict):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{name}.shkp").write_bytes(binio.encode_params(module.state_dict()))
    (directory / f"{name}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_checkpoint(directory, name):
    """``(arrays, meta)`` for one checkpoint; missing or corrupt files raise :class:`FormatError`."""
    directory = Path(directory)
    try:
        arrays = binio.decode_params((directory / f"{name}.shkp").read_bytes())
        meta = json.loads((directory / f"{name}.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"checkpoint {directory / name} is incomplete: {exc.filename} missing") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint {directory / name}: invalid metadata ({exc})") from None
    return arrays, meta


def _restore(module: Module, arrays):
    module.astype(np.float32)
    try:
        module.load_state_dict(arrays)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint does not match the architecture: {exc}") from None
    return module


def load_cfl(directory, name):
    """``(CflNet, meta, NormStats)``."""
    arrays, meta = read_checkpoint(directory, name)
    try:
        arch = meta["architecture"]
        model = CflNet(arch["in_channels"], arch["width"], arch["depth"], arch["pooling"])
        stats = NormStats.from_dict(meta["stats"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint {name}: metadata lacks {exc}") from None
    return _restore(model, arrays), meta, stats


def load_solver(directory, name):
    """``(SolverNet, meta, NormStats)``."""
    arrays, meta = read_checkpoint(directory, name)
    try:
        net = SolverNet(**meta["architecture"])
        stats = NormStats.from_dict(meta["stats"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint {name}: metadata lacks {exc}") from None
    return _restore(net, arrays), meta, stats
