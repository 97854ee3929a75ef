"""Elliptic transmission solve for the electrostatic potential on the
composite domain: fixed layer rectangle below z = -H, deformed gap above.

The gap is pulled back to a fixed reference rectangle by the vertical map
z = -H + eta * g(x) with column height g(x) = u(x) + H, so assembly is
deterministic and the flat-plate case is reproduced exactly.  Columns whose
height drops below the coincidence threshold are excised from the gap
subproblem; their interface node becomes a Dirichlet node at plate
potential.  Free columns bordering a touching block (and the two lateral
columns) carry Dirichlet boundary data down their vertical segment.

The two subdomains couple through a shared interface unknown (value
continuity) and a second-order one-sided flux-matching equation
sigma1 dz(psi1) = sigma2 dz(psi2) at z = -H.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from memsbeam.beam import BeamGrid, BeamState
from memsbeam.config import NumericalParams, PhysicalParams
from memsbeam.dielectric import BoundaryDataModel, PermittivityModel

__all__ = [
    "COL_FREE",
    "COL_DIRICHLET",
    "COL_TOUCHING",
    "CompositeMesh",
    "PotentialSolution",
    "build_mesh",
    "solve_potential",
    "traces",
]

COL_FREE = 0        # interior gap column with unknowns
COL_DIRICHLET = 1   # lateral outer column or free column bordering a touching block
COL_TOUCHING = 2    # excised column; interface node pinned at plate potential


@dataclass(frozen=True)
class CompositeMesh:
    """Shared x-columns, layer grid on [-L,L]x[-H-d,-H], gap reference grid
    on [-L,L]x[0,1], with per-column coincidence flags and heights."""

    grid: BeamGrid
    H: float
    d: float
    n_z: int
    n_eta: int
    eps_gap: float
    heights: np.ndarray = field(repr=False)     # g_i = u_i + H
    col_kind: np.ndarray = field(repr=False)    # COL_* per column

    @property
    def touching(self) -> np.ndarray:
        return self.col_kind == COL_TOUCHING

    @property
    def dz(self) -> float:
        return self.d / self.n_z

    @property
    def d_eta(self) -> float:
        return 1.0 / self.n_eta

    @property
    def z_layer(self) -> np.ndarray:
        return np.linspace(-self.H - self.d, -self.H, self.n_z + 1)

    @property
    def eta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_eta + 1)

    def coincidence_count(self) -> int:
        return int(np.count_nonzero(self.touching))


@dataclass(frozen=True)
class PotentialSolution:
    """Discrete potential: psi1 on the layer grid, phi2(x, eta) on the gap
    reference grid (NaN on touching columns), with normal-derivative traces
    per column and the linear-system residual."""

    mesh: CompositeMesh
    psi1: np.ndarray = field(repr=False)        # (n+1, n_z+1)
    phi2: np.ndarray = field(repr=False)        # (n+1, n_eta+1)
    plate_trace: np.ndarray = field(repr=False)  # dz(psi2) at the plate, NaN when touching
    layer_trace: np.ndarray = field(repr=False)  # dz(psi1) at z=-H
    residual: float = 0.0


def build_mesh(state: BeamState, phys: PhysicalParams, num: NumericalParams,
               touching_mask: Optional[np.ndarray] = None) -> CompositeMesh:
    """Flag touching columns (height below eps_gap) and classify the rest.

    touching_mask overrides the height-threshold classification; columns kept
    free despite a sub-threshold height get their height clamped at eps_gap so
    the pulled-back gap stencil stays well defined.
    """
    g = state.values + phys.H
    if np.min(g) < -1e-9 * max(phys.H, 1.0):
        raise ValueError(f"inadmissible state: min(u + H) = {np.min(g):.3e} < 0")
    n = state.grid.n_x
    if touching_mask is None:
        touching = g < num.eps_gap
    else:
        touching = np.asarray(touching_mask, dtype=bool).copy()
        g = np.where(touching, g, np.maximum(g, num.eps_gap))
    kind = np.full(n + 1, COL_FREE, dtype=np.int8)
    kind[touching] = COL_TOUCHING
    for i in range(n + 1):
        if kind[i] == COL_TOUCHING:
            continue
        if i == 0 or i == n:
            kind[i] = COL_DIRICHLET
        elif touching[i - 1] or touching[i + 1]:
            kind[i] = COL_DIRICHLET
    return CompositeMesh(grid=state.grid, H=phys.H, d=phys.d,
                         n_z=num.n_z_layer, n_eta=num.n_eta_gap,
                         eps_gap=num.eps_gap, heights=g, col_kind=kind)


def solve_potential(mesh: CompositeMesh, perm: PermittivityModel,
                    bdata: BoundaryDataModel, state: BeamState,
                    tol: float = 1e-12,
                    source_layer: Optional[Callable] = None,
                    source_gap: Optional[Callable] = None,
                    dirichlet: Optional[Callable] = None) -> PotentialSolution:
    """Solve the transmission problem on the composite mesh.

    Optional hooks for verification: source_layer / source_gap prescribe a
    right-hand side of div(sigma grad psi) = f in physical coordinates, and
    ``dirichlet(x, z)`` overrides every Dirichlet value (manufactured
    solutions).  Default boundary values come from ``bdata`` evaluated at
    the local deflection.
    """
    n = mesh.grid.n_x
    hx = mesh.grid.h
    nz, neta = mesh.n_z, mesh.n_eta
    dz, deta = mesh.dz, mesh.d_eta
    xs = mesh.grid.nodes
    zs = mesh.z_layer
    etas = mesh.eta
    g = mesh.heights
    u = state.values
    kind = mesh.col_kind
    H = mesh.H

    NL = (n + 1) * (nz + 1)
    NG = (n + 1) * neta
    N = NL + NG

    def li(i, j):
        return i * (nz + 1) + j

    def gi_idx(i, j):
        # gap node (i, j), j = 1..neta; j = 0 aliases the layer interface node
        if j == 0:
            return li(i, nz)
        return NL + i * neta + (j - 1)

    def bval_layer(i, j):
        if dirichlet is not None:
            return float(dirichlet(xs[i], zs[j]))
        return float(bdata.h1(xs[i], zs[j], u[i]))

    def bval_gap(i, j):
        zphys = -H + etas[j] * g[i]
        if dirichlet is not None:
            return float(dirichlet(xs[i], zphys))
        return float(bdata.h2(xs[i], zphys, u[i]))

    def bval_plate(i):
        if dirichlet is not None:
            return float(dirichlet(xs[i], u[i]))
        return float(bdata.V)

    # column height derivatives for the mapped stencil (centered, O(h^2))
    gp = np.gradient(g, hx, edge_order=2)
    gpp = np.empty_like(g)
    gpp[1:-1] = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / hx ** 2
    gpp[0] = gpp[-1] = 0.0  # never used: end columns are Dirichlet

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b = np.zeros(N)

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    def pin(r, value):
        add(r, r, 1.0)
        b[r] = value

    sigma1 = perm.sigma1
    s2 = perm.sigma2

    # ---- layer rows ----
    for i in range(n + 1):
        x = xs[i]
        for j in range(nz + 1):
            r = li(i, j)
            if j == 0 or i == 0 or i == n:
                pin(r, bval_layer(i, j))
                continue
            if j == nz:
                if kind[i] == COL_TOUCHING:
                    pin(r, bval_plate(i) if dirichlet is None else float(dirichlet(x, -H)))
                elif kind[i] == COL_DIRICHLET:
                    pin(r, bval_layer(i, nz))
                else:
                    # flux matching sigma1 dz(psi1) = sigma2 dz(psi2), both
                    # by second-order one-sided differences at z = -H
                    s1H = float(sigma1(x, -H))
                    cl = s1H / (2.0 * dz)
                    cg = s2 / (2.0 * deta * g[i])
                    add(r, li(i, nz), 3.0 * cl + 3.0 * cg)
                    add(r, li(i, nz - 1), -4.0 * cl)
                    add(r, li(i, nz - 2), 1.0 * cl)
                    add(r, gi_idx(i, 1), -4.0 * cg)
                    add(r, gi_idx(i, 2), 1.0 * cg)
                continue
            # interior conservative 5-point stencil with midpoint coefficients
            z = zs[j]
            sE = float(sigma1(x + 0.5 * hx, z))
            sW = float(sigma1(x - 0.5 * hx, z))
            sN = float(sigma1(x, z + 0.5 * dz))
            sS = float(sigma1(x, z - 0.5 * dz))
            add(r, li(i + 1, j), sE / hx ** 2)
            add(r, li(i - 1, j), sW / hx ** 2)
            add(r, li(i, j + 1), sN / dz ** 2)
            add(r, li(i, j - 1), sS / dz ** 2)
            add(r, r, -(sE + sW) / hx ** 2 - (sN + sS) / dz ** 2)
            if source_layer is not None:
                b[r] = float(source_layer(x, z))

    # ---- gap rows ----
    for i in range(n + 1):
        x = xs[i]
        if kind[i] == COL_TOUCHING:
            for j in range(1, neta + 1):
                pin(gi_idx(i, j), 0.0)
            continue
        if kind[i] == COL_DIRICHLET:
            for j in range(1, neta + 1):
                pin(gi_idx(i, j), bval_gap(i, j))
            continue
        # interior free column
        pin(gi_idx(i, neta), bval_plate(i))
        gx, gxx, gcol = gp[i], gpp[i], g[i]
        for j in range(1, neta):
            r = gi_idx(i, j)
            eta = etas[j]
            eta_x = -eta * gx / gcol
            eta_xx = eta * (2.0 * gx ** 2 / gcol ** 2 - gxx / gcol)
            c_xx = 1.0 / hx ** 2
            c_ee = (eta_x ** 2 + 1.0 / gcol ** 2) / deta ** 2
            c_x_eta = 2.0 * eta_x / (4.0 * hx * deta)
            c_e = eta_xx / (2.0 * deta)

            add(r, gi_idx(i + 1, j), c_xx)
            add(r, gi_idx(i - 1, j), c_xx)
            add(r, gi_idx(i, j + 1), c_ee + c_e)
            add(r, gi_idx(i, j - 1), c_ee - c_e)
            add(r, r, -2.0 * c_xx - 2.0 * c_ee)
            add(r, gi_idx(i + 1, j + 1), c_x_eta)
            add(r, gi_idx(i - 1, j - 1), c_x_eta)
            add(r, gi_idx(i + 1, j - 1), -c_x_eta)
            add(r, gi_idx(i - 1, j + 1), -c_x_eta)
            if source_gap is not None:
                b[r] = float(source_gap(x, -H + eta * gcol)) / s2

    A = sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(N, N)))
    # row equilibration: flux and near-touchdown rows carry 1/g factors that
    # would otherwise dominate the residual scale
    row_max = np.maximum(abs(A).max(axis=1).toarray().ravel(), 1e-300)
    D = sp.diags(1.0 / row_max)
    A = sp.csc_matrix(D @ A)
    b = D @ b
    sol = spla.spsolve(A, b)
    res = float(np.linalg.norm(A @ sol - b))
    scale = 1.0 + float(np.linalg.norm(b))
    if not np.all(np.isfinite(sol)):
        raise RuntimeError(
            f"singular transmission system: {mesh.coincidence_count()} touching columns, "
            f"min height {np.min(g):.3e}")
    if res > max(tol, 1e-9) * scale:
        raise RuntimeError(f"transmission solve residual {res:.3e} exceeds tolerance")

    psi1 = sol[:NL].reshape(n + 1, nz + 1)
    phi2 = np.full((n + 1, neta + 1), np.nan)
    free_cols = kind != COL_TOUCHING
    phi2[free_cols, 0] = psi1[free_cols, nz]
    phi2[free_cols, 1:] = sol[NL:].reshape(n + 1, neta)[free_cols, :]

    plate_trace, layer_trace = _compute_traces(mesh, psi1, phi2)
    return PotentialSolution(mesh=mesh, psi1=psi1, phi2=phi2,
                             plate_trace=plate_trace, layer_trace=layer_trace,
                             residual=res / scale)


def _compute_traces(mesh: CompositeMesh, psi1: np.ndarray, phi2: np.ndarray):
    nz, neta = mesh.n_z, mesh.n_eta
    dz, deta = mesh.dz, mesh.d_eta
    g = mesh.heights
    free = mesh.col_kind != COL_TOUCHING

    layer_trace = (3.0 * psi1[:, nz] - 4.0 * psi1[:, nz - 1] + psi1[:, nz - 2]) / (2.0 * dz)
    plate_trace = np.full(g.shape, np.nan)
    plate_trace[free] = (3.0 * phi2[free, neta] - 4.0 * phi2[free, neta - 1]
                         + phi2[free, neta - 2]) / (2.0 * deta * g[free])
    return plate_trace, layer_trace


def traces(sol: PotentialSolution) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (dz psi2 at the plate, dz psi1 at z = -H)."""
    return sol.plate_trace, sol.layer_trace
