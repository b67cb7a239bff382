"""Uniform grids, ideal-gas thermodynamics and the quantities entering the CFL bound."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError

FIELD_NAMES = ("rho", "u", "v", "temp")
N_FIELDS = len(FIELD_NAMES)


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError(f"cell sizes must be positive, got dx={self.dx}, dy={self.dy}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def min_spacing(self) -> float:
        return min(self.dx, self.dy)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.dx, self.ny * self.dy)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` arrays of shape ``(nx, ny)`` (index ``[i, j]`` is x-major)."""
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def coarsen(self, factor: int) -> "Grid2D":
        if self.nx % factor or self.ny % factor:
            raise ValueError(f"factor {factor} does not divide grid {self.nx}x{self.ny}")
        return Grid2D(self.nx // factor, self.ny // factor, self.dx * factor, self.dy * factor, self.origin)


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4
    r_gas: float = 287.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.r_gas > 0:
            raise ValueError(f"r_gas must be positive, got {self.r_gas}")


AIR = GasModel(1.4, 287.0)


def _frozen(a, shape):
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.shape != shape:
        raise ValueError(f"field shape {arr.shape} does not match grid {shape}")
    arr.flags.writeable = False
    return arr


def _first_bad_cell(mask):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0])


@dataclass(frozen=True, eq=False)
class FlowField:
    """Primitive variables on a grid; arrays are copied and made read-only."""

    grid: Grid2D
    rho: np.ndarray
    u: np.ndarray
    v: np.ndarray
    temp: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        for name in FIELD_NAMES:
            object.__setattr__(self, name, _frozen(getattr(self, name), self.grid.shape))
        if self.check:
            for name in ("rho", "temp"):
                arr = getattr(self, name)
                bad = ~(arr > 0)
                if bad.any():
                    raise DomainError(f"{name} must be positive; violated at cell {_first_bad_cell(bad)}")

    def stack(self) -> np.ndarray:
        """Fields as a ``(4, nx, ny)`` array in ``FIELD_NAMES`` order."""
        return np.stack([self.rho, self.u, self.v, self.temp])

    @classmethod
    def from_stack(cls, grid: Grid2D, arr, check: bool = True) -> "FlowField":
        arr = np.asarray(arr)
        if arr.shape[0] != 4:
            raise ValueError(f"expected 4 stacked fields, got {arr.shape[0]}")
        return cls(grid, arr[0], arr[1], arr[2], arr[3], check=check)

    def pressure(self, gas: GasModel) -> np.ndarray:
        return self.rho * gas.r_gas * self.temp


@dataclass(frozen=True, eq=False)
class ConservedField:
    grid: Grid2D
    mass: np.ndarray
    mom_x: np.ndarray
    mom_y: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        for name in ("mass", "mom_x", "mom_y", "energy"):
            object.__setattr__(self, name, _frozen(getattr(self, name), self.grid.shape))

    def totals(self) -> np.ndarray:
        """Cell-area-weighted integrals of (mass, mom_x, mom_y, energy)."""
        a = self.grid.cell_area
        return np.array([self.mass.sum() * a, self.mom_x.sum() * a, self.mom_y.sum() * a, self.energy.sum() * a])


def sound_speed_array(temp, gas: GasModel):
    temp = np.asarray(temp, dtype=np.float64)
    bad = ~(temp > 0)
    if bad.any():
        raise DomainError(f"temperature must be positive; violated at cell {_first_bad_cell(np.atleast_1d(bad))}")
    return np.sqrt(gas.gamma * gas.r_gas * temp)


def sound_speed(field: FlowField, gas: GasModel) -> np.ndarray:
    """Local sound speed sqrt(gamma * R * T) per cell."""
    return sound_speed_array(field.temp, gas)


def local_wave_speed(field: FlowField, gas: GasModel) -> np.ndarray:
    a = sound_speed(field, gas)
    return np.maximum(np.abs(field.u) + a, np.abs(field.v) + a)


def max_wave_speed(field: FlowField, gas: GasModel) -> float:
    return float(local_wave_speed(field, gas).max())


def cfl_timestep(field: FlowField, gas: GasModel, courant: float) -> float:
    """Largest timestep allowed by the CFL bound, ``C * min(dx, dy) / lambda_max``."""
    if not 0 < courant < 1:
        raise ValueError(f"courant number must lie in (0, 1), got {courant}")
    lam = max_wave_speed(field, gas)
    if lam <= 0:
        raise RuntimeError("maximum wave speed is zero")
    return courant * field.grid.min_spacing / lam


def primitive_to_conserved(field: FlowField, gas: GasModel) -> ConservedField:
    rho, u, v = field.rho, field.u, field.v
    p = rho * gas.r_gas * field.temp
    energy = p / (gas.gamma - 1.0) + 0.5 * rho * (u * u + v * v)
    return ConservedField(field.grid, rho, rho * u, rho * v, energy)


def conserved_to_primitive(cons: ConservedField, gas: GasModel) -> FlowField:
    mass = cons.mass
    bad = ~(mass > 0)
    if bad.any():
        raise DomainError(f"non-positive density at cell {_first_bad_cell(bad)}")
    u = cons.mom_x / mass
    v = cons.mom_y / mass
    e_int = cons.energy - 0.5 * (cons.mom_x * u + cons.mom_y * v)
    bad = ~(e_int > 0)
    if bad.any():
        raise DomainError(f"negative internal energy at cell {_first_bad_cell(bad)}")
    p = (gas.gamma - 1.0) * e_int
    return FlowField(cons.grid, mass, u, v, p / (mass * gas.r_gas))


def _gradient_1d(f, h, axis):
    g = np.empty_like(f)
    n = f.shape[axis]
    sl = [slice(None)] * f.ndim

    def at(s):
        sl2 = list(sl)
        sl2[axis] = s
        return tuple(sl2)

    g[at(slice(1, n - 1))] = (f[at(slice(2, n))] - f[at(slice(0, n - 2))]) / (2.0 * h)
    g[at(0)] = (f[at(1)] - f[at(0)]) / h
    g[at(n - 1)] = (f[at(n - 1)] - f[at(n - 2)]) / h
    return g


def gradient_xy(arr, dx: float, dy: float) -> tuple[np.ndarray, np.ndarray]:
    """Central differences inside, first-order one-sided at the edges.

    Works on the last two axes so stacked ``(..., nx, ny)`` input is fine.
    """
    arr = np.asarray(arr, dtype=np.float64)
    return _gradient_1d(arr, dx, arr.ndim - 2), _gradient_1d(arr, dy, arr.ndim - 1)


def spatial_gradients(field: FlowField) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    g = field.grid
    return {name: gradient_xy(getattr(field, name), g.dx, g.dy) for name in FIELD_NAMES}
