"""Derived per-cell channels used as neural-CFL inputs.

Channel layouts (fixed):

* base:     rho, u, v, temp
* gradient: d/dx rho, d/dy rho, d/dx u, d/dy u, d/dx v, d/dy v, d/dx temp, d/dy temp
* cfl:      lambda, |u|, |v|, a
"""

import numpy as np

from .fields import GasModel, gradient_xy, sound_speed_array

BASE_CHANNELS = ("rho", "u", "v", "temp")
GRADIENT_CHANNELS = tuple(f"d{ax}_{f}" for f in BASE_CHANNELS for ax in ("x", "y"))
CFL_CHANNELS = ("lambda", "abs_u", "abs_v", "a")


def gradient_channels(stack, dx, dy):
    """``(..., 4, nx, ny)`` physical fields -> ``(..., 8, nx, ny)`` gradients."""
    gx, gy = gradient_xy(stack, dx, dy)
    out = np.stack([gx, gy], axis=-3)  # (..., 4, 2, nx, ny)
    return out.reshape(*stack.shape[:-3], 8, *stack.shape[-2:])


def cfl_channels(stack, gas: GasModel):
    """``(..., 4, nx, ny)`` physical fields -> ``(..., 4, nx, ny)`` wave-speed features."""
    stack = np.asarray(stack, dtype=np.float64)
    a = sound_speed_array(stack[..., 3, :, :], gas)
    au = np.abs(stack[..., 1, :, :])
    av = np.abs(stack[..., 2, :, :])
    lam = np.maximum(au + a, av + a)
    return np.stack([lam, au, av, a], axis=-3)
