import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shockcast.exceptions import DomainError
from shockcast.fields import (AIR, FlowField, GasModel, Grid2D, cfl_timestep, conserved_to_primitive,
                              local_wave_speed, max_wave_speed, primitive_to_conserved, sound_speed,
                              spatial_gradients)


def uniform(grid, rho=1.2, u=0.0, v=0.0, temp=300.0):
    full = lambda x: np.full(grid.shape, float(x))  # noqa: E731
    return FlowField(grid, full(rho), full(u), full(v), full(temp))


GRID = Grid2D(6, 5, 1e-3, 2e-3)


def test_grid_invariants_and_centers():
    with pytest.raises(ValueError):
        Grid2D(1, 4, 1.0, 1.0)
    with pytest.raises(ValueError):
        Grid2D(4, 4, 0.0, 1.0)
    g = Grid2D(3, 2, 0.5, 0.25, origin=(1.0, -1.0))
    X, Y = g.cell_centers()
    assert X[2, 1] == 1.0 + 2.5 * 0.5 and Y[2, 1] == -1.0 + 1.5 * 0.25


def test_gas_invariants():
    with pytest.raises(ValueError):
        GasModel(1.0, 287.0)
    with pytest.raises(ValueError):
        GasModel(1.4, 0.0)


def test_flowfield_rejects_nonpositive_state():
    with pytest.raises(DomainError):
        uniform(GRID, rho=0.0)
    with pytest.raises(DomainError):
        uniform(GRID, temp=-1.0)


def test_sound_speed_air_at_300k():
    a = sound_speed(uniform(GRID), AIR)
    np.testing.assert_allclose(a, math.sqrt(1.4 * 287.0 * 300.0))
    assert a[0, 0] == pytest.approx(347.19, abs=5e-3)


def test_sound_speed_scales_with_sqrt_temperature():
    base = sound_speed(uniform(GRID, temp=300.0), AIR)
    assert np.array_equal(sound_speed(uniform(GRID, temp=1200.0), AIR), 2 * base)


def test_sound_speed_zero_temperature_names_the_cell():
    f = uniform(GRID)
    temp = f.temp.copy()
    temp[2, 3] = 0.0
    bad = FlowField(GRID, f.rho, f.u, f.v, temp, check=False)
    with pytest.raises(DomainError, match=r"\(2, 3\)"):
        sound_speed(bad, AIR)


def test_wave_speed_examples():
    a = math.sqrt(1.4 * 287.0 * 300.0)
    np.testing.assert_allclose(local_wave_speed(uniform(GRID, u=100.0, v=-50.0), AIR), 100.0 + a)
    assert np.array_equal(local_wave_speed(uniform(GRID), AIR), sound_speed(uniform(GRID), AIR))
    f = uniform(GRID)
    u = f.u.copy()
    u[1, 1] = 500.0
    spiky = FlowField(GRID, f.rho, u, f.v, f.temp)
    assert max_wave_speed(spiky, AIR) == pytest.approx(500.0 + a)


def test_wave_speed_symmetric_in_velocity_components():
    rng = np.random.default_rng(0)
    f = FlowField(GRID, np.ones(GRID.shape), rng.normal(0, 100, GRID.shape), rng.normal(0, 100, GRID.shape),
                  np.full(GRID.shape, 300.0))
    swapped = FlowField(GRID, f.rho, f.v, f.u, f.temp)
    assert np.array_equal(local_wave_speed(f, AIR), local_wave_speed(swapped, AIR))


def test_cfl_timestep_example():
    g = Grid2D(4, 4, 1e-3, 2e-3)
    # choose T so that the sound speed is exactly 400 m/s
    temp = 400.0 ** 2 / (1.4 * 287.0)
    assert cfl_timestep(uniform(g, temp=temp), AIR, 0.8) == pytest.approx(2.0e-6, rel=1e-14)
    assert cfl_timestep(uniform(g, temp=4 * temp), AIR, 0.8) == pytest.approx(1.0e-6, rel=1e-14)
    with pytest.raises(ValueError):
        cfl_timestep(uniform(g), AIR, 1.0)


def test_conserved_examples():
    cons = primitive_to_conserved(uniform(GRID, rho=1.0, temp=1.0), GasModel(1.4, 1.0))
    np.testing.assert_allclose(cons.energy, 2.5)


def test_conserved_inverse_rejects_negative_internal_energy():
    cons = primitive_to_conserved(uniform(GRID, u=10.0), AIR)
    cons_bad = type(cons)(GRID, cons.mass, cons.mom_x, cons.mom_y, 0.4 * 0.5 * cons.mass * 100.0)
    with pytest.raises(DomainError):
        conserved_to_primitive(cons_bad, AIR)


def test_gradients_linear_constant_quadratic():
    g = Grid2D(8, 6, 0.1, 0.2)
    X, Y = g.cell_centers()
    f = FlowField(g, 1.0 + 3 * X, X * X, np.zeros(g.shape), np.full(g.shape, 300.0))
    grads = spatial_gradients(f)
    np.testing.assert_allclose(grads["rho"][0], 3.0, rtol=1e-12)
    np.testing.assert_allclose(grads["rho"][1], 0.0, atol=1e-12)
    np.testing.assert_allclose(grads["u"][0][1:-1], 2 * X[1:-1], rtol=1e-12)
    assert np.array_equal(grads["temp"][0], np.zeros(g.shape))


# ---------------------------------------------------------------- properties

def random_field(seed, nx=5, ny=4):
    rng = np.random.default_rng(seed)
    g = Grid2D(nx, ny, rng.uniform(1e-4, 1e-2), rng.uniform(1e-4, 1e-2))
    return FlowField(g, rng.uniform(0.1, 10, g.shape), rng.normal(0, 300, g.shape), rng.normal(0, 300, g.shape),
                     rng.uniform(50, 3000, g.shape))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
def test_cfl_bound_holds_with_equality(seed, courant):
    f = random_field(seed)
    dt = cfl_timestep(f, AIR, courant)
    lam = max_wave_speed(f, AIR)
    bound = courant * f.grid.min_spacing
    assert dt * lam <= bound * (1 + 2 ** -52)
    assert dt * lam == pytest.approx(bound, rel=2 ** -52 * 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_max_wave_speed_matches_loop(seed):
    f = random_field(seed)
    lam = local_wave_speed(f, AIR)
    best = -1.0
    for i in range(f.grid.nx):
        for j in range(f.grid.ny):
            best = max(best, lam[i, j])
    assert max_wave_speed(f, AIR) == best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_primitive_conserved_round_trip(seed):
    f = random_field(seed)
    back = conserved_to_primitive(primitive_to_conserved(f, AIR), AIR)
    for name in ("rho", "u", "v", "temp"):
        a, b = getattr(f, name), getattr(back, name)
        assert np.max(np.abs(a - b) / np.maximum(np.abs(a), 1.0)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_gradients_exact_for_affine(c0, cx, cy):
    g = Grid2D(7, 5, 0.3, 0.7)
    X, Y = g.cell_centers()
    f = FlowField(g, np.ones(g.shape), c0 + cx * X + cy * Y, np.zeros(g.shape), np.full(g.shape, 300.0))
    gx, gy = spatial_gradients(f)["u"]
    np.testing.assert_allclose(gx, cx, atol=1e-9)
    np.testing.assert_allclose(gy, cy, atol=1e-9)
