"""Field energy, force profile, directional derivative."""

import numpy as np
import pytest

from memsbeam.beam import BeamGrid, BeamState
from memsbeam.config import DielectricSettings, NumericalParams, PhysicalParams
from memsbeam.dielectric import example55_model, make_permittivity
from memsbeam.diagnostics import flat_plate_oracle
from memsbeam.electrostatics import (directional_derivative_check, electrostatic_energy,
                                     force)
from memsbeam.transmission import build_mesh, solve_potential


def _setup(n_x=40, n_z=16, n_eta=16, V=2.0, sigma2=2.0):
    phys = PhysicalParams(L=1.0, H=1.0, d=1.0, V=V)
    num = NumericalParams(n_x=n_x, n_z_layer=n_z, n_eta_gap=n_eta, eps_gap=1e-6)
    perm = make_permittivity(DielectricSettings(sigma2=sigma2), phys)
    bdata = example55_model(perm, phys)
    return phys, num, perm, bdata


def _solve(state, phys, num, perm, bdata):
    mesh = build_mesh(state, phys, num)
    sol = solve_potential(mesh, perm, bdata, state, tol=1e-12)
    return mesh, sol


def test_flat_plate_energy_and_force_exact():
    phys, num, perm, bdata = _setup()
    grid = BeamGrid(phys.L, num.n_x)
    for w, f_exact, e_exact in ((0.0, 4.0 / 9.0, -8.0 / 3.0), (-0.5, 0.64, -3.2)):
        state = BeamState(grid, np.full(grid.n_x + 1, w))
        mesh, sol = _solve(state, phys, num, perm, bdata)
        fp = force(sol, state, perm, mesh)
        assert np.max(np.abs(fp.values - f_exact)) < 1e-10
        assert electrostatic_energy(sol, perm, mesh) == pytest.approx(e_exact, abs=1e-10)
        oracle = flat_plate_oracle(phys, perm, w)
        assert oracle["energy"] == pytest.approx(e_exact, abs=1e-12)


def test_force_nonnegative_energy_nonpositive_random_states():
    phys, num, perm, bdata = _setup(n_x=24, n_z=8, n_eta=8)
    grid = BeamGrid(phys.L, num.n_x)
    rng = np.random.default_rng(23)
    for _ in range(5):
        v = np.zeros(grid.n_x + 1)
        v[1:-1] = -0.7 * np.abs(rng.normal(size=grid.n_x - 1)) / 3.0
        state = BeamState(grid, v)
        mesh, sol = _solve(state, phys, num, perm, bdata)
        fp = force(sol, state, perm, mesh)
        assert np.min(fp.values) >= 0.0
        assert electrostatic_energy(sol, perm, mesh) < 0.0


def test_force_monotone_in_gap():
    # closer plate means stronger attraction: the flat-plate force grows as
    # w decreases
    phys, num, perm, bdata = _setup()
    grid = BeamGrid(phys.L, num.n_x)
    values = []
    for w in (0.0, -0.3, -0.6):
        state = BeamState(grid, np.full(grid.n_x + 1, w))
        mesh, sol = _solve(state, phys, num, perm, bdata)
        values.append(float(np.max(force(sol, state, perm, mesh).values)))
    assert values[0] < values[1] < values[2]


def test_force_stable_under_small_perturbation():
    phys, num, perm, bdata = _setup()
    grid = BeamGrid(phys.L, num.n_x)
    base = BeamState.bump(grid, -0.4)
    mesh_a, sol_a = _solve(base, phys, num, perm, bdata)
    f_a = force(sol_a, base, perm, mesh_a).values
    pert = BeamState(grid, base.values + 1e-6 * np.sin(np.pi * grid.nodes))
    mesh_b, sol_b = _solve(pert, phys, num, perm, bdata)
    f_b = force(sol_b, pert, perm, mesh_b).values
    assert np.max(np.abs(f_a - f_b)) < 1e-4


def test_directional_derivative_improves_with_s():
    phys, num, perm, bdata = _setup()
    grid = BeamGrid(phys.L, num.n_x)
    u = BeamState.zero(grid)
    w = BeamState.bump(grid, -phys.H / 40.0)
    table = directional_derivative_check(u, w, [1e-2, 1e-3], phys, num, perm, bdata)
    assert table[0]["rel_error"] < 5e-2
    assert table[1]["rel_error"] <= table[0]["rel_error"] + 1e-12
    assert table[1]["rel_error"] < 1e-2


def test_directional_derivative_rejects_inadmissible_perturbation():
    phys, num, perm, bdata = _setup(n_x=24, n_z=8, n_eta=8)
    grid = BeamGrid(phys.L, num.n_x)
    u = BeamState.bump(grid, -0.99 * phys.H)
    w = BeamState.bump(grid, -3.0 * phys.H)
    with pytest.raises(ValueError):
        directional_derivative_check(u, w, [1.0], phys, num, perm, bdata)
