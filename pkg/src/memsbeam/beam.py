"""Discrete clamped-beam states, difference operators, norms and the
mechanical energy.

The deflection lives on a uniform grid over (-L, L).  Clamped ends are
encoded by the ghost-node convention u_{-1} = u_1 and u_{n+1} = u_{n-1}
(zero end slope) together with zero end values, so the obstacle constraint
u >= -H stays a plain nodal bound.  All integrals use the trapezoid rule on
nodal squares; the same convention feeds the energies, the norms and the
duality pairing for the contact multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from memsbeam.config import PhysicalParams

__all__ = [
    "BeamGrid",
    "BeamState",
    "first_difference",
    "second_difference",
    "mechanical_energy",
    "h2_seminorms",
    "clamped_operators",
]


@dataclass(frozen=True)
class BeamGrid:
    """Uniform node set x_i = -L + i*h, i = 0..n_x over (-L, L)."""

    L: float
    n_x: int

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n_x

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n_x + 1)

    @property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights over the full node set."""
        w = np.full(self.n_x + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass(frozen=True)
class BeamState:
    """Nodal deflection values on a BeamGrid."""

    grid: BeamGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_x + 1,):
            raise ValueError(
                f"values shape {vals.shape} does not match grid with {self.grid.n_x + 1} nodes")
        object.__setattr__(self, "values", vals)

    def is_admissible(self, H: float) -> bool:
        return bool(np.min(self.values) >= -H)

    @staticmethod
    def zero(grid: BeamGrid) -> "BeamState":
        return BeamState(grid, np.zeros(grid.n_x + 1))

    @staticmethod
    def bump(grid: BeamGrid, amplitude: float) -> "BeamState":
        """Scaled clamped bump amplitude * (1 - (x/L)^2)^2."""
        x = grid.nodes / grid.L
        return BeamState(grid, amplitude * (1.0 - x ** 2) ** 2)


def _ghost_pad(values: np.ndarray) -> np.ndarray:
    """Pad with reflected ghost nodes consistent with zero end slope."""
    return np.concatenate(([values[1]], values, [values[-2]]))


def first_difference(state: BeamState) -> np.ndarray:
    """Centered first differences; zero at the ends by ghost reflection."""
    v = _ghost_pad(state.values)
    return (v[2:] - v[:-2]) / (2.0 * state.grid.h)


def second_difference(state: BeamState) -> np.ndarray:
    """Centered second differences with the clamped ghost convention.

    Linear in the state and exact on quadratics at interior nodes.
    """
    v = _ghost_pad(state.values)
    return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / state.grid.h ** 2


def h2_seminorms(state: BeamState) -> tuple[float, float, float]:
    """Trapezoid-rule (||u||_2, ||u'||_2, ||u''||_2)."""
    w = state.grid.quad_weights
    u = state.values
    du = first_difference(state)
    d2u = second_difference(state)
    return (
        float(np.sqrt(np.dot(w, u ** 2))),
        float(np.sqrt(np.dot(w, du ** 2))),
        float(np.sqrt(np.dot(w, d2u ** 2))),
    )


def mechanical_energy(state: BeamState, params: PhysicalParams) -> float:
    """Bending + (tension and self-stretching) energy:
    (beta/2)||u''||^2 + (tau/2 + (a/4)||u'||^2) ||u'||^2.
    """
    w = state.grid.quad_weights
    du2 = float(np.dot(w, first_difference(state) ** 2))
    d2u2 = float(np.dot(w, second_difference(state) ** 2))
    return 0.5 * params.beta * d2u2 + (0.5 * params.tau + 0.25 * params.a * du2) * du2


def clamped_operators(grid: BeamGrid) -> dict:
    """Sparse operators acting on the interior unknown vector v_1..v_{n-1}
    of a clamped state (end values fixed at zero).

    Returns D1 and D2 mapping interior values to full-node centered first
    and second differences (ghost-reflected ends), the full-node trapezoid
    weight vector, and the interior weight vector.  These are exactly the
    matrices whose weighted squares reproduce mechanical_energy and
    h2_seminorms on clamped states.
    """
    n = grid.n_x
    h = grid.h
    m = n - 1  # interior unknowns

    # D2: rows 0..n.  Row 0: 2 v_1 / h^2 (ghost u_{-1} = u_1, u_0 = 0).
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    add(0, 0, 2.0 / h ** 2)
    add(n, m - 1, 2.0 / h ** 2)
    for i in range(1, n):
        c = i - 1
        add(i, c, -2.0 / h ** 2)
        if i - 1 >= 1:
            add(i, c - 1, 1.0 / h ** 2)
        if i + 1 <= n - 1:
            add(i, c + 1, 1.0 / h ** 2)
    D2 = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, m))

    # D1: centered; ends are zero by reflection, so rows 0 and n are empty.
    rows, cols, vals = [], [], []
    for i in range(1, n):
        c = i - 1
        if i + 1 <= n - 1:
            add(i, c + 1, 0.5 / h)
        if i - 1 >= 1:
            add(i, c - 1, -0.5 / h)
    D1 = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, m))

    w_full = grid.quad_weights
    w_int = w_full[1:-1].copy()
    return {"D1": D1, "D2": D2, "w_full": w_full, "w_int": w_int}
