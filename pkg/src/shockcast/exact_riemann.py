"""Exact solution of the 1D Euler Riemann problem (ideal gas).

Kept independent of the finite-volume code on purpose: it is the reference the
solver is verified against.  Follows the classic two-nonlinear-wave construction
with Newton iteration on the pressure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StarState:
    pressure: float
    velocity: float
    rho_left: float
    rho_right: float


def _pressure_function(p, rho_k, p_k, a_k, gamma):
    """Value and derivative of f_K(p) for one side (shock if p > p_K, else rarefaction)."""
    if p > p_k:
        A = 2.0 / ((gamma + 1.0) * rho_k)
        B = (gamma - 1.0) / (gamma + 1.0) * p_k
        q = np.sqrt(A / (p + B))
        return (p - p_k) * q, q * (1.0 - 0.5 * (p - p_k) / (B + p))
    ratio = p / p_k
    f = 2.0 * a_k / (gamma - 1.0) * (ratio ** ((gamma - 1.0) / (2.0 * gamma)) - 1.0)
    df = 1.0 / (rho_k * a_k) * ratio ** (-(gamma + 1.0) / (2.0 * gamma))
    return f, df


def star_state(left, right, gamma=1.4, tol=1e-14, max_iter=100) -> StarState:
    """Newton iteration for p* given ``left``/``right`` as (rho, u, p) triples."""
    rho_l, u_l, p_l = left
    rho_r, u_r, p_r = right
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    du = u_r - u_l
    if 2.0 * (a_l + a_r) / (gamma - 1.0) <= du:
        raise ValueError("initial data generate vacuum")

    # two-rarefaction guess, always positive
    z = (gamma - 1.0) / (2.0 * gamma)
    p = ((a_l + a_r - 0.5 * (gamma - 1.0) * du) / (a_l / p_l**z + a_r / p_r**z)) ** (1.0 / z)
    for _ in range(max_iter):
        f_l, df_l = _pressure_function(p, rho_l, p_l, a_l, gamma)
        f_r, df_r = _pressure_function(p, rho_r, p_r, a_r, gamma)
        p_new = max(p - (f_l + f_r + du) / (df_l + df_r), 1e-14 * p)
        change = 2.0 * abs(p_new - p) / (p_new + p)
        p = p_new
        if change < tol:
            break
    else:
        raise RuntimeError("Newton iteration for star pressure did not converge")
    f_l, _ = _pressure_function(p, rho_l, p_l, a_l, gamma)
    f_r, _ = _pressure_function(p, rho_r, p_r, a_r, gamma)
    u = 0.5 * (u_l + u_r) + 0.5 * (f_r - f_l)

    def star_rho(rho_k, p_k):
        if p > p_k:
            g = (gamma - 1.0) / (gamma + 1.0)
            return rho_k * (p / p_k + g) / (g * p / p_k + 1.0)
        return rho_k * (p / p_k) ** (1.0 / gamma)

    return StarState(float(p), float(u), float(star_rho(rho_l, p_l)), float(star_rho(rho_r, p_r)))


def sample(left, right, xi, gamma=1.4):
    """Exact (rho, u, p) at similarity coordinates ``xi = (x - x0) / t``."""
    rho_l, u_l, p_l = left
    rho_r, u_r, p_r = right
    star = star_state(left, right, gamma)
    ps, us = star.pressure, star.velocity
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    g1 = (gamma - 1.0) / (gamma + 1.0)

    xi = np.asarray(xi, dtype=np.float64)
    rho = np.empty_like(xi)
    u = np.empty_like(xi)
    p = np.empty_like(xi)

    left_side = xi <= us
    # left wave
    if ps > p_l:
        s_l = u_l - a_l * np.sqrt((gamma + 1.0) / (2.0 * gamma) * ps / p_l + (gamma - 1.0) / (2.0 * gamma))
        pre = left_side & (xi <= s_l)
        post = left_side & ~pre
        rho[pre], u[pre], p[pre] = rho_l, u_l, p_l
        rho[post], u[post], p[post] = star.rho_left, us, ps
    else:
        a_sl = a_l * (ps / p_l) ** ((gamma - 1.0) / (2.0 * gamma))
        head, tail = u_l - a_l, us - a_sl
        pre = left_side & (xi <= head)
        fan = left_side & (xi > head) & (xi < tail)
        post = left_side & (xi >= tail)
        rho[pre], u[pre], p[pre] = rho_l, u_l, p_l
        rho[post], u[post], p[post] = star.rho_left, us, ps
        c = 2.0 / (gamma + 1.0) + g1 / a_l * (u_l - xi[fan])
        rho[fan] = rho_l * c ** (2.0 / (gamma - 1.0))
        u[fan] = 2.0 / (gamma + 1.0) * (a_l + 0.5 * (gamma - 1.0) * u_l + xi[fan])
        p[fan] = p_l * c ** (2.0 * gamma / (gamma - 1.0))
    # right wave
    right_side = ~left_side
    if ps > p_r:
        s_r = u_r + a_r * np.sqrt((gamma + 1.0) / (2.0 * gamma) * ps / p_r + (gamma - 1.0) / (2.0 * gamma))
        pre = right_side & (xi >= s_r)
        post = right_side & ~pre
        rho[pre], u[pre], p[pre] = rho_r, u_r, p_r
        rho[post], u[post], p[post] = star.rho_right, us, ps
    else:
        a_sr = a_r * (ps / p_r) ** ((gamma - 1.0) / (2.0 * gamma))
        head, tail = u_r + a_r, us + a_sr
        pre = right_side & (xi >= head)
        fan = right_side & (xi < head) & (xi > tail)
        post = right_side & (xi <= tail)
        rho[pre], u[pre], p[pre] = rho_r, u_r, p_r
        rho[post], u[post], p[post] = star.rho_right, us, ps
        c = 2.0 / (gamma + 1.0) - g1 / a_r * (u_r - xi[fan])
        rho[fan] = rho_r * c ** (2.0 / (gamma - 1.0))
        u[fan] = 2.0 / (gamma + 1.0) * (-a_r + 0.5 * (gamma - 1.0) * u_r + xi[fan])
        p[fan] = p_r * c ** (2.0 * gamma / (gamma - 1.0))
    return rho, u, p


SOD_LEFT = (1.0, 0.0, 1.0)
SOD_RIGHT = (0.125, 0.0, 0.1)


def sod_profile(x, t, x0=0.5, gamma=1.4):
    """Exact Sod shock-tube (rho, u, p) at positions ``x`` and time ``t > 0``."""
    return sample(SOD_LEFT, SOD_RIGHT, (np.asarray(x) - x0) / t, gamma)
