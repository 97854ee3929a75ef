"""Electrostatic energy and the force acting on the beam, built from a
solved potential, plus the finite-difference check of the directional
derivative of the energy.

The energy is -(1/2) * integral of sigma |grad psi|^2 over layer and gap;
the gap integral is evaluated on the reference rectangle with the Jacobian
weight g(x).  The force has two branches: the plate trace of dz(psi2) with
the slope factor on free columns, and the layer trace of dz(psi1) on
coincidence columns.  Both are squares, so the force is non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from memsbeam.beam import BeamState, first_difference
from memsbeam.config import NumericalParams, PhysicalParams
from memsbeam.dielectric import BoundaryDataModel, PermittivityModel
from memsbeam.transmission import CompositeMesh, PotentialSolution, build_mesh, solve_potential

__all__ = [
    "ForceProfile",
    "electrostatic_energy",
    "force",
    "directional_derivative_check",
]


@dataclass(frozen=True)
class ForceProfile:
    """Nodal electrostatic force per unit length with a branch tag per node
    (False = free, True = coincidence)."""

    values: np.ndarray = field(repr=False)
    coincidence: np.ndarray = field(repr=False)


def _free_runs(touching: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous index runs [a, b] of non-touching columns."""
    runs = []
    start = None
    for i, t in enumerate(touching):
        if not t and start is None:
            start = i
        elif t and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(touching) - 1))
    return runs


def electrostatic_energy(sol: PotentialSolution, perm: PermittivityModel,
                         mesh: CompositeMesh) -> float:
    """Trapezoid quadrature of -(sigma/2)|grad psi|^2 over the composite
    mesh.  Returns a non-positive number."""
    hx = mesh.grid.h
    xs = mesh.grid.nodes

    # layer contribution
    psi = sol.psi1
    psi_x = np.gradient(psi, hx, axis=0, edge_order=2)
    psi_z = np.gradient(psi, mesh.dz, axis=1, edge_order=2)
    X, Z = np.meshgrid(xs, mesh.z_layer, indexing="ij")
    dens1 = perm.sigma1(X, Z) * (psi_x ** 2 + psi_z ** 2)
    wx = mesh.grid.quad_weights
    wz = np.full(mesh.n_z + 1, mesh.dz)
    wz[0] = wz[-1] = 0.5 * mesh.dz
    total = float(wx @ dens1 @ wz)

    # gap contribution per contiguous free block, with Jacobian weight g(x)
    weta = np.full(mesh.n_eta + 1, mesh.d_eta)
    weta[0] = weta[-1] = 0.5 * mesh.d_eta
    etas = mesh.eta
    for a, b in _free_runs(mesh.touching):
        phi = sol.phi2[a:b + 1]
        g = mesh.heights[a:b + 1]
        if b > a:
            phi_x = np.gradient(phi, hx, axis=0, edge_order=2)
            gp = np.gradient(g, hx, edge_order=2)
        else:
            phi_x = np.zeros_like(phi)
            gp = np.zeros_like(g)
        phi_eta = np.gradient(phi, mesh.d_eta, axis=1, edge_order=2)
        eta_x = -np.outer(gp / g, etas)
        psix = phi_x + phi_eta * eta_x
        psiz = phi_eta / g[:, None]
        dens2 = perm.sigma2 * (psix ** 2 + psiz ** 2) * g[:, None]
        wxr = np.full(b - a + 1, hx)
        wxr[0] = wxr[-1] = 0.5 * hx
        total += float(wxr @ dens2 @ weta)

    return -0.5 * total


def force(sol: PotentialSolution, state: BeamState, perm: PermittivityModel,
          mesh: CompositeMesh) -> ForceProfile:
    """Nodal force profile from the potential traces.

    Free columns: (sigma2/2)(1 + u'^2) (dz psi2 at the plate)^2.
    Coincidence columns: (sigma1(x,-H)^2 / (2 sigma2)) (dz psi1 at -H)^2.
    """
    xs = mesh.grid.nodes
    touching = mesh.touching
    du = first_difference(state)
    s1H = np.asarray(perm.sigma1(xs, -mesh.H), dtype=float)

    g = np.empty(xs.shape)
    free = ~touching
    g[free] = 0.5 * perm.sigma2 * (1.0 + du[free] ** 2) * sol.plate_trace[free] ** 2
    g[touching] = (s1H[touching] ** 2 / (2.0 * perm.sigma2)) * sol.layer_trace[touching] ** 2
    return ForceProfile(values=g, coincidence=touching.copy())


def _energy_at(state: BeamState, phys: PhysicalParams, num: NumericalParams,
               perm: PermittivityModel, bdata: BoundaryDataModel) -> float:
    mesh = build_mesh(state, phys, num)
    sol = solve_potential(mesh, perm, bdata, state, tol=num.tol_as)
    return electrostatic_energy(sol, perm, mesh)


def directional_derivative_check(state: BeamState, direction: BeamState,
                                 s_list: Sequence[float],
                                 phys: PhysicalParams, num: NumericalParams,
                                 perm: PermittivityModel, bdata: BoundaryDataModel) -> list[dict]:
    """Compare (E_e(u + s(w-u)) - E_e(u)) / s against the quadrature of
    g(u) (w - u) for each step size s.

    Each perturbed state must stay admissible.  Returns one record per s
    with the quotient, the assembled pairing and the relative error.
    """
    u = state.values
    w = direction.values
    dvec = w - u
    for s in s_list:
        if np.min(u + s * dvec) < -phys.H:
            raise ValueError(f"perturbed state inadmissible at s = {s}")

    mesh = build_mesh(state, phys, num)
    sol = solve_potential(mesh, perm, bdata, state, tol=num.tol_as)
    e0 = electrostatic_energy(sol, perm, mesh)
    fp = force(sol, state, perm, mesh)
    pairing = float(np.dot(state.grid.quad_weights, fp.values * dvec))

    out = []
    for s in s_list:
        pert = BeamState(state.grid, u + s * dvec)
        quotient = (_energy_at(pert, phys, num, perm, bdata) - e0) / s
        denom = max(abs(pairing), 1e-300)
        out.append({
            "s": float(s),
            "quotient": float(quotient),
            "pairing": pairing,
            "rel_error": abs(quotient - pairing) / denom,
        })
    return out
