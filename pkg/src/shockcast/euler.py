"""Finite-volume solver for the 2D compressible Euler equations.

MUSCL (minmod) reconstruction of primitive variables, HLL/HLLC interface fluxes
with Davis wave-speed estimates, unsplit flux-difference RHS, and the
three-stage SSP Runge-Kutta integrator.  The timestep comes from the CFL bound
evaluated on each step's input state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BlowUpError, ConfigurationError, DomainError, TruncationError
from .fields import AIR, ConservedField, FlowField, GasModel, Grid2D, cfl_timestep

logger = logging.getLogger(__name__)

BOUNDARY_KINDS = ("symmetry", "open")
EDGES = ("xlo", "xhi", "ylo", "yhi")
FLUXES = ("hll", "hllc")
RECONSTRUCTIONS = ("first_order", "muscl_minmod")
N_GHOST = 2

P_AMBIENT = 101325.0
T_AMBIENT = 300.0


@dataclass(frozen=True)
class SolverConfig:
    gas: GasModel = AIR
    courant: float = 0.8
    boundary: dict = field(default_factory=lambda: dict.fromkeys(EDGES, "symmetry"))
    flux: str = "hllc"
    reconstruction: str = "muscl_minmod"
    t_end: float = 5e-3
    max_steps: int = 100_000
    # Each CFL step runs as this many unsplit RK substeps of dt / substeps.  With
    # the max-over-directions wave speed, one full-size unsplit step puts the
    # checkerboard mode at a Courant sum of 2C, beyond SSP-RK3's real-axis limit.
    substeps: int = 2

    def __post_init__(self):
        if not 0 < self.courant < 1:
            raise ConfigurationError(f"courant must lie in (0, 1), got {self.courant}")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if self.max_steps <= 0:
            raise ConfigurationError("max_steps must be positive")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be >= 1")
        if self.flux not in FLUXES:
            raise ConfigurationError(f"unknown flux {self.flux!r}; expected one of {FLUXES}")
        if self.reconstruction not in RECONSTRUCTIONS:
            raise ConfigurationError(f"unknown reconstruction {self.reconstruction!r}")
        if isinstance(self.boundary, str):
            object.__setattr__(self, "boundary", dict.fromkeys(EDGES, self.boundary))
        missing = set(EDGES) - set(self.boundary)
        if missing:
            raise ConfigurationError(f"boundary kinds missing for edges {sorted(missing)}")
        for edge, kind in self.boundary.items():
            if kind not in BOUNDARY_KINDS:
                raise ConfigurationError(f"edge {edge}: unknown boundary kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    snapshots: tuple
    times: np.ndarray
    # exact step sizes accepted by the solver (every step, even when snapshots are thinned)
    accepted_dts: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        times = np.array(self.times, dtype=np.float64)
        if len(times) != len(self.snapshots):
            raise ValueError(f"{len(times)} times for {len(self.snapshots)} snapshots")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def grid(self) -> Grid2D:
        return self.snapshots[0].grid

    def __len__(self):
        return len(self.snapshots)

    def stacked(self) -> np.ndarray:
        """``(n_snapshots, 4, nx, ny)`` float64 array."""
        return np.stack([s.stack() for s in self.snapshots])


# ---------------------------------------------------------------- initial data


def init_circular_blast(grid: Grid2D, pressure_ratio: float, gas: GasModel = AIR, r_blast: float | None = None,
                        p_ambient: float = P_AMBIENT, temp: float = T_AMBIENT) -> FlowField:
    """Quarter-disc of high pressure centred on the domain corner at ``grid.origin``.

    Temperature is uniform, so density jumps by the same ratio as pressure.
    ``r_blast`` defaults to 0.2 of the domain width.
    """
    if not pressure_ratio > 1:
        raise ValueError(f"pressure_ratio must exceed 1, got {pressure_ratio}")
    if r_blast is None:
        r_blast = 0.2 * grid.extent[0]
    X, Y = grid.cell_centers()
    r = np.hypot(X - grid.origin[0], Y - grid.origin[1])
    p = np.where(r < r_blast, pressure_ratio * p_ambient, p_ambient)
    T = np.full(grid.shape, temp)
    zeros = np.zeros(grid.shape)
    return FlowField(grid, p / (gas.r_gas * T), zeros, zeros, T)


SOD_GAS = GasModel(1.4, 1.0)


def init_sod_1d(grid: Grid2D, gas: GasModel = SOD_GAS) -> FlowField:
    """Sod's shock tube along x (left rho=1, p=1; right rho=0.125, p=0.1), uniform in y."""
    X, _ = grid.cell_centers()
    mid = grid.origin[0] + 0.5 * grid.extent[0]
    left = X < mid
    rho = np.where(left, 1.0, 0.125)
    p = np.where(left, 1.0, 0.1)
    zeros = np.zeros(grid.shape)
    return FlowField(grid, rho, zeros, zeros, p / (rho * gas.r_gas))


# ---------------------------------------------------------------- numerics


def minmod(a, b):
    return np.where(a * b > 0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def reconstruct(states, scheme: str = "muscl_minmod", axis: int = -1):
    """Left/right states at interfaces ``k+1/2`` for ``k = 1 .. n-3`` along ``axis``.

    The outermost cell on each side only feeds slopes, so ``n`` cells yield
    ``n - 3`` interfaces (with two ghost layers these are exactly the ``N + 1``
    faces of the ``N`` interior cells).
    """
    w = np.moveaxis(np.asarray(states), axis, -1)
    if w.shape[-1] < 4:
        raise ValueError("reconstruction needs at least 4 cells including ghosts")
    if scheme == "first_order":
        left, right = w[..., 1:-2], w[..., 2:-1]
    elif scheme == "muscl_minmod":
        d = np.diff(w, axis=-1)
        half_slope = 0.5 * minmod(d[..., :-1], d[..., 1:])  # cells 1 .. n-2
        left = w[..., 1:-2] + half_slope[..., :-1]
        right = w[..., 2:-1] - half_slope[..., 1:]
    else:
        raise ValueError(f"unknown reconstruction {scheme!r}")
    return np.moveaxis(left, -1, axis), np.moveaxis(right, -1, axis)


def _physical_flux(w, gamma):
    rho, un, ut, p = w
    mn = rho * un
    energy = p / (gamma - 1.0) + 0.5 * rho * (un * un + ut * ut)
    return np.stack([mn, mn * un + p, mn * ut, (energy + p) * un]), energy


def euler_flux(w, gas: GasModel):
    """Exact normal flux of primitive states ``w = (rho, u_n, u_t, p)``."""
    return _physical_flux(np.asarray(w, dtype=np.float64), gas.gamma)[0]


def riemann_flux(left, right, gas: GasModel, kind: str = "hllc"):
    """HLL or HLLC flux across interfaces with normal along the first velocity slot.

    ``left``/``right`` are primitive ``(rho, u_n, u_t, p)`` arrays stacked on
    axis 0; the result is ``(mass, normal momentum, tangential momentum, energy)``.
    """
    g = gas.gamma
    wl = np.asarray(left, dtype=np.float64)
    wr = np.asarray(right, dtype=np.float64)
    for side, w in (("left", wl), ("right", wr)):
        if not (np.all(w[0] > 0) and np.all(w[3] > 0)):
            raise DomainError(f"inadmissible {side} state (non-positive density or internal energy)")
    rl, ul, vl, pl = wl
    rr, ur, vr, pr = wr
    al = np.sqrt(g * pl / rl)
    ar = np.sqrt(g * pr / rr)
    sl = np.minimum(ul - al, ur - ar)
    sr = np.maximum(ul + al, ur + ar)
    fl, el = _physical_flux(wl, g)
    fr, er = _physical_flux(wr, g)
    ul_cons = np.stack([rl, rl * ul, rl * vl, el])
    ur_cons = np.stack([rr, rr * ur, rr * vr, er])

    if kind == "hll":
        f_mid = (sr * fl - sl * fr + sl * sr * (ur_cons - ul_cons)) / (sr - sl)
        return np.where(sl >= 0, fl, np.where(sr <= 0, fr, f_mid))
    if kind != "hllc":
        raise ValueError(f"unknown flux kind {kind!r}")

    ml = rl * (sl - ul)
    mr = rr * (sr - ur)
    s_star = (pr - pl + ul * ml - ur * mr) / (ml - mr)

    def star_flux(f, u_cons, rho, un, ut, p, e, s, m):
        coef = m / (s - s_star)
        u_star = np.stack([
            coef,
            coef * s_star,
            coef * ut,
            coef * (e / rho + (s_star - un) * (s_star + p / m)),
        ])
        return f + s * (u_star - u_cons)

    fsl = star_flux(fl, ul_cons, rl, ul, vl, pl, el, sl, ml)
    fsr = star_flux(fr, ur_cons, rr, ur, vr, pr, er, sr, mr)
    return np.where(sl >= 0, fl, np.where(s_star >= 0, fsl, np.where(sr > 0, fsr, fr)))


def _fill_ghosts(w, boundary):
    """Pad primitive ``(4, nx, ny)`` with two ghost layers per side, in place of BCs."""
    g = N_GHOST
    wp = np.pad(w, ((0, 0), (g, g), (g, g)), mode="edge")  # open boundaries: zero gradient
    nx, ny = w.shape[1:]
    lo = np.arange(g - 1, -1, -1)
    if boundary["xlo"] == "symmetry":
        wp[:, :g, g:-g] = w[:, lo, :]
        wp[1, :g, g:-g] *= -1.0
    if boundary["xhi"] == "symmetry":
        wp[:, -g:, g:-g] = w[:, np.arange(nx - 1, nx - 1 - g, -1), :]
        wp[1, -g:, g:-g] *= -1.0
    if boundary["ylo"] == "symmetry":
        wp[:, g:-g, :g] = w[:, :, lo]
        wp[2, g:-g, :g] *= -1.0
    if boundary["yhi"] == "symmetry":
        wp[:, g:-g, -g:] = w[:, :, np.arange(ny - 1, ny - 1 - g, -1)]
        wp[2, g:-g, -g:] *= -1.0
    return wp


def _sweep_flux(wp, gas, cfg):
    """Interface fluxes along axis 1 of ghost-padded primitives ``(4, n+4, m)``.

    Returns ``(4, n+1, m)`` in normal/tangential ordering.
    """
    left, right = reconstruct(wp, cfg.reconstruction, axis=1)
    return riemann_flux(left, right, gas, cfg.flux)


def _cons_to_prim(U, gamma):
    rho = U[0]
    u = U[1] / rho
    v = U[2] / rho
    p = (gamma - 1.0) * (U[3] - 0.5 * (U[1] * u + U[2] * v))
    return np.stack([rho, u, v, p])


def euler_rhs(U, grid: Grid2D, cfg: SolverConfig):
    """-div F for conserved ``U`` of shape ``(4, nx, ny)``; raises DomainError if inadmissible."""
    w = _cons_to_prim(U, cfg.gas.gamma)
    if not (np.all(w[0] > 0) and np.all(w[3] > 0)):
        raise DomainError("inadmissible state (non-positive density or pressure)")
    wp = _fill_ghosts(w, cfg.boundary)
    g = N_GHOST
    fx = _sweep_flux(wp[:, :, g:-g], cfg.gas, cfg)
    # y sweep: same code on transposed data with the velocity slots swapped
    wy = wp[[0, 2, 1, 3], g:-g, :].transpose(0, 2, 1)
    fy = _sweep_flux(wy, cfg.gas, cfg)[[0, 2, 1, 3]].transpose(0, 2, 1)
    return -((fx[:, 1:, :] - fx[:, :-1, :]) / grid.dx + (fy[:, :, 1:] - fy[:, :, :-1]) / grid.dy)


def ssp_rk3(U, dt, rhs):
    """Three-stage SSP Runge-Kutta, written in increment form so constant states stay bit-exact."""
    k0 = rhs(U)
    k1 = rhs(U + dt * k0)
    k2 = rhs(U + (0.25 * dt) * (k0 + k1))
    return U + dt * (k0 / 6.0 + k1 / 6.0 + (2.0 / 3.0) * k2)


def _to_conserved(field: FlowField, gas: GasModel):
    p = field.rho * gas.r_gas * field.temp
    return np.stack([
        field.rho,
        field.rho * field.u,
        field.rho * field.v,
        p / (gas.gamma - 1.0) + 0.5 * field.rho * (field.u ** 2 + field.v ** 2),
    ])


def _to_field(U, grid, gas, step=None):
    w = _cons_to_prim(U, gas.gamma)
    if not (np.all(w[0] > 0) and np.all(w[3] > 0)):
        raise BlowUpError("inadmissible state after update", step)
    return FlowField(grid, w[0], w[1], w[2], w[3] / (w[0] * gas.r_gas), check=False)


def _step_conserved(U, grid, cfg, dt, step):
    h = dt / cfg.substeps
    try:
        for _ in range(cfg.substeps):
            U = ssp_rk3(U, h, lambda V: euler_rhs(V, grid, cfg))
        return U
    except DomainError as exc:
        raise BlowUpError(str(exc), step) from exc


def advance_one_step(field: FlowField, cfg: SolverConfig, t: float = 0.0, step: int = 0):
    """One CFL-limited SSP-RK3 step; ``t`` lets the step be clipped to land on ``cfg.t_end``."""
    dt = cfl_timestep(field, cfg.gas, cfg.courant)
    if t + dt >= cfg.t_end:
        dt = cfg.t_end - t
    U = _step_conserved(_to_conserved(field, cfg.gas), field.grid, cfg, dt, step)
    return _to_field(U, field.grid, cfg.gas, step), dt


def simulate(init: FlowField, cfg: SolverConfig, record_every: int = 1) -> Trajectory:
    """Run the adaptive loop from t=0 to ``cfg.t_end``.

    Every accepted step is recorded (``record_every`` thins this for memory if
    needed; the final state is always kept).
    """
    grid = init.grid
    U = _to_conserved(init, cfg.gas)
    field = init
    t = 0.0
    snapshots, times, accepted = [init], [0.0], []
    step = 0
    while t < cfg.t_end:
        if step >= cfg.max_steps:
            raise TruncationError(f"max_steps={cfg.max_steps} reached at t={t:.6g} < t_end={cfg.t_end:.6g}",
                                  Trajectory(snapshots, times, np.array(accepted)))
        dt = cfl_timestep(field, cfg.gas, cfg.courant)
        last = t + dt >= cfg.t_end
        if last:
            dt = cfg.t_end - t
        U = _step_conserved(U, grid, cfg, dt, step)
        accepted.append(dt)
        t = cfg.t_end if last else t + dt
        step += 1
        field = _to_field(U, grid, cfg.gas, step)
        if step % record_every == 0 or last:
            snapshots.append(field)
            times.append(t)
    logger.debug("simulate: %d steps to t=%g", step, t)
    return Trajectory(snapshots, times, np.array(accepted))


def conserved_totals(field: FlowField, gas: GasModel) -> np.ndarray:
    U = _to_conserved(field, gas)
    return U.reshape(4, -1).sum(axis=1) * field.grid.cell_area


def to_conserved_field(field: FlowField, gas: GasModel) -> ConservedField:
    U = _to_conserved(field, gas)
    return ConservedField(field.grid, *U)
