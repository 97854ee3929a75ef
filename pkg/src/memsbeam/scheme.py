"""Time-implicit minimizing-movements scheme.

Each step minimizes (1/2 delta)||v - u_n||^2 + E(v) over admissible clamped
states by an outer fixed point: freeze the nonlocal tension coefficient and
the electrostatic force at the current iterate, solve the resulting convex
quadratic obstacle problem by a primal-dual active set iteration, and
repeat until the iterates settle.  The accepted state is certified as a
stationary point with the per-step energy-decrease property; decrease is
verified against the true energy and restored by backtracking if needed.

The admissible step size delta0 = min{1, 1/(16 c1)} comes from the
explicit lower-bound chain for the energy: with

    A = 3 L m1 (d+1) sigma_max,   B = (3/2) m2 (d+1) sigma_max,
    K = (d+1) sigma_max m3,       c1 = max{A + K^2/beta, B + K^2/beta},

the energy satisfies E(v) >= (beta/4)||v''||^2 - c1 (1 + ||v||^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from memsbeam.beam import BeamGrid, BeamState, clamped_operators, mechanical_energy
from memsbeam.config import ValidatedConfig
from memsbeam.dielectric import (BoundaryDataModel, PermittivityModel, estimate_m_constants,
                                 example55_model, make_permittivity)
from memsbeam.electrostatics import electrostatic_energy, force
from memsbeam.transmission import build_mesh, solve_potential

__all__ = [
    "SchemeConstants",
    "StepResult",
    "SimulationTrace",
    "StepError",
    "SimulationContext",
    "lower_bound_constant",
    "make_context",
    "total_energy",
    "solve_obstacle_qp",
    "step",
    "run",
]


class StepError(RuntimeError):
    """A time step failed (fixed point or backtracking exhausted)."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SchemeConstants:
    """Energy lower-bound constant and the admissible step size."""

    c1: float
    delta0: float
    m1: float
    m2: float
    m3: float
    w_max: float


def lower_bound_constant(phys, sigma_max: float, m1: float, m2: float, m3: float,
                         w_max: float) -> SchemeConstants:
    """Compute c1 by the explicit chain and delta0 = min{1, 1/(16 c1)}."""
    for name, val in (("sigma_max", sigma_max), ("m1", m1), ("m2", m2), ("m3", m3)):
        if val < 0.0 or not math.isfinite(val):
            raise ValueError(f"{name} must be finite and non-negative, got {val}")
    A = 3.0 * phys.L * m1 * (phys.d + 1.0) * sigma_max
    B = 1.5 * m2 * (phys.d + 1.0) * sigma_max
    K = (phys.d + 1.0) * sigma_max * m3
    c1 = max(A + K ** 2 / phys.beta, B + K ** 2 / phys.beta)
    delta0 = 1.0 if c1 <= 1.0 / 16.0 else 1.0 / (16.0 * c1)
    return SchemeConstants(c1=c1, delta0=delta0, m1=m1, m2=m2, m3=m3, w_max=w_max)


@dataclass(frozen=True)
class StepResult:
    state: BeamState
    multiplier: np.ndarray = field(repr=False)   # nodal density zeta_i (<= 0)
    velocity: np.ndarray = field(repr=False)
    energy_mechanical: float = 0.0
    energy_electrostatic: float = 0.0
    energy_total: float = 0.0
    dissipation: float = 0.0
    fp_iters: int = 0
    as_iters: int = 0
    energy_decrease_ok: bool = True
    complementarity_residual: float = 0.0
    backtrack_lambda: float = 1.0


@dataclass
class SimulationTrace:
    """Piecewise-constant-in-time discrete trajectory with per-step records."""

    delta: float
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    steps: list[StepResult] = field(default_factory=list)
    cumulative_dissipation: list[float] = field(default_factory=list)
    envelope_bound: list[float] = field(default_factory=list)
    l2_sq: list[float] = field(default_factory=list)
    energy0: float = 0.0
    constants: Optional[SchemeConstants] = None
    aborted: bool = False
    error: str = ""

    def final_state(self, grid: BeamGrid) -> BeamState:
        return BeamState(grid, self.states[-1])


@dataclass
class SimulationContext:
    """Immutable per-run bundle: grid, operators, models, constants."""

    cfg: ValidatedConfig
    grid: BeamGrid
    ops: dict
    perm: Optional[PermittivityModel]
    bdata: Optional[BoundaryDataModel]
    constants: SchemeConstants

    @property
    def electrostatics_on(self) -> bool:
        return self.bdata is not None


def make_context(cfg: ValidatedConfig) -> SimulationContext:
    phys, num = cfg.physical, cfg.numerical
    grid = BeamGrid(phys.L, num.n_x)
    ops = clamped_operators(grid)
    if phys.V > 0.0:
        perm = make_permittivity(cfg.dielectric, phys)
        bdata = example55_model(perm, phys)
        m1, m2, m3 = estimate_m_constants(bdata, phys, w_max=cfg.w_max)
        consts = lower_bound_constant(phys, perm.sigma_max, m1, m2, m3, cfg.w_max)
    else:
        perm = None
        bdata = None
        consts = SchemeConstants(c1=0.0, delta0=1.0, m1=0.0, m2=0.0, m3=0.0, w_max=cfg.w_max)
    return SimulationContext(cfg=cfg, grid=grid, ops=ops, perm=perm, bdata=bdata,
                             constants=consts)


def initial_state(ctx: SimulationContext) -> BeamState:
    init = ctx.cfg.initial
    if init.kind == "zero":
        return BeamState.zero(ctx.grid)
    if init.kind == "bump":
        return BeamState.bump(ctx.grid, init.amplitude)
    values = np.loadtxt(init.path)
    return BeamState(ctx.grid, values)


def total_energy(state: BeamState, ctx: SimulationContext) -> tuple[float, float, float]:
    """(E_mechanical, E_electrostatic, E_total) at a state."""
    em = mechanical_energy(state, ctx.cfg.physical)
    if not ctx.electrostatics_on:
        return em, 0.0, em
    mesh = build_mesh(state, ctx.cfg.physical, ctx.cfg.numerical)
    sol = solve_potential(mesh, ctx.perm, ctx.bdata, state, tol=ctx.cfg.numerical.tol_as)
    ee = electrostatic_energy(sol, ctx.perm, mesh)
    return em, ee, em + ee


def solve_obstacle_qp(A: sp.spmatrix, b: np.ndarray, lower: float,
                      active0: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Primal-dual active-set solve of min (1/2) x'Ax + b'x  s.t.  x >= lower.

    Returns (x, mu, iterations) with exact feasibility and complementarity:
    x == lower on the final active set, mu == 0 elsewhere, mu >= 0 on it.
    """
    A = A.tocsr()
    m = b.shape[0]
    active = active0.copy()
    c_pd = float(np.max(A.diagonal()))
    x = np.full(m, lower)
    mu = np.zeros(m)
    for it in range(1, max_iter + 1):
        inactive = ~active
        x = np.full(m, lower)
        if inactive.any():
            Aii = A[inactive][:, inactive].tocsc()
            rhs = -b[inactive]
            if active.any():
                rhs -= A[inactive][:, active] @ np.full(int(active.sum()), lower)
            x[inactive] = spla.spsolve(Aii, rhs)
        mu = A @ x + b
        mu[inactive] = 0.0
        new_active = (mu - c_pd * (x - lower)) > 0.0
        if np.array_equal(new_active, active):
            return x, mu, it
        active = new_active
    raise StepError("active-set iteration did not converge",
                    {"active_count": int(active.sum()), "iterations": max_iter})


def _force_vector(state: BeamState, ctx: SimulationContext,
                  touching_mask: Optional[np.ndarray] = None) -> np.ndarray:
    if not ctx.electrostatics_on:
        return np.zeros(ctx.grid.n_x + 1)
    mesh = build_mesh(state, ctx.cfg.physical, ctx.cfg.numerical,
                      touching_mask=touching_mask)
    sol = solve_potential(mesh, ctx.perm, ctx.bdata, state, tol=ctx.cfg.numerical.tol_as)
    return force(sol, state, ctx.perm, mesh).values


def step(u_n: BeamState, delta: float, ctx: SimulationContext,
         energy_n: Optional[float] = None) -> StepResult:
    """One implicit minimizing-movements step from u_n.

    energy_n: cached total energy at u_n (computed if omitted); the ledger
    stays consistent when the caller threads the previous step's energy.
    """
    phys, num = ctx.cfg.physical, ctx.cfg.numerical
    ops = ctx.ops
    grid = ctx.grid
    w_full = ops["w_full"]
    w_int = ops["w_int"]
    D1, D2 = ops["D1"], ops["D2"]
    W = sp.diags(w_full)
    K_bend = (phys.beta * (D2.T @ W @ D2)).tocsr()
    K_stretch = (D1.T @ W @ D1).tocsr()
    M_int = sp.diags(w_int)

    if energy_n is None:
        _, _, energy_n = total_energy(u_n, ctx)

    lower = -phys.H
    u_int = u_n.values[1:-1]
    v = u_n.values.copy()
    theta = 1.0
    prev_resid = math.inf
    increases = 0
    as_total = 0
    active = v[1:-1] <= lower + num.eps_gap
    v_hat_full = v.copy()
    mu = np.zeros(u_int.shape)
    converged = False
    fp_iters = 0
    # contact-classification freeze once a period-2 active-set cycle appears
    frozen_touch: Optional[np.ndarray] = None
    set_hist: list[bytes] = []
    hat_hist: list[np.ndarray] = []

    def _step_functional(vals: np.ndarray) -> float:
        st = BeamState(grid, vals)
        _, _, et = total_energy(st, ctx)
        dd = vals - u_n.values
        return float(np.dot(w_full, dd ** 2)) / (2.0 * delta) + et

    for k in range(1, num.max_fp + 1):
        fp_iters = k
        state_k = BeamState(grid, v)
        dv = D1 @ v[1:-1]
        c_k = phys.tau + phys.a * float(dv @ (w_full * dv))
        g_vec = _force_vector(state_k, ctx, touching_mask=frozen_touch)

        A = (M_int / delta + K_bend + c_k * K_stretch).tocsr()
        b = -(w_int * u_int) / delta + w_int * g_vec[1:-1]
        x, mu, as_iters = solve_obstacle_qp(A, b, lower, active, num.max_as)
        as_total += as_iters
        active = x <= lower

        v_hat_full = np.zeros(grid.n_x + 1)
        v_hat_full[1:-1] = x

        if frozen_touch is None:
            key = np.packbits(active).tobytes()
            set_hist.append(key)
            hat_hist.append(v_hat_full.copy())
            if len(set_hist) >= 3 and set_hist[-1] == set_hist[-3] \
                    and set_hist[-1] != set_hist[-2]:
                # the touching set chatters between two branches; keep the
                # branch whose minimizer has the lower step functional and
                # freeze the classification for the force from here on
                cand_a, cand_b = hat_hist[-1], hat_hist[-2]
                pick = cand_a if _step_functional(cand_a) <= _step_functional(cand_b) \
                    else cand_b
                frozen_touch = (pick + phys.H) < num.eps_gap
                v = pick.copy()
                active = v[1:-1] <= lower
                prev_resid = math.inf
                increases = 0
                continue

        v_new = v + theta * (v_hat_full - v)
        resid = float(np.max(np.abs(v_new - v)))
        if resid > prev_resid:
            increases += 1
            if increases >= 2:
                theta = max(0.5 * theta, 1.0 / 64.0)
                increases = 0
        else:
            increases = 0
        prev_resid = resid
        v = v_new
        if resid <= num.tol_fp:
            converged = True
            break

    if not converged:
        raise StepError(
            f"fixed point did not converge in {num.max_fp} iterations "
            f"(last residual {prev_resid:.3e})",
            {"fp_iters": fp_iters, "residual": prev_resid, "theta": theta})

    # adopt the exact QP solution: active nodes sit at the obstacle exactly
    u_next = BeamState(grid, v_hat_full)

    em, ee, e_total = total_energy(u_next, ctx)
    diff = u_next.values - u_n.values
    diss = float(np.dot(w_full, diff ** 2)) / (2.0 * delta)
    slack = 10.0 * num.tol_fp
    lam = 1.0
    while diss + e_total > energy_n + slack:
        lam *= 0.5
        if lam < 1e-8:
            raise StepError("energy-decrease backtracking exhausted",
                            {"F_minus_E": diss + e_total - energy_n, "lambda": lam})
        cand = BeamState(grid, u_n.values + lam * (v_hat_full - u_n.values))
        em, ee, e_total = total_energy(cand, ctx)
        diff = cand.values - u_n.values
        diss = float(np.dot(w_full, diff ** 2)) / (2.0 * delta)
        u_next = cand

    # nodal multiplier density: mu is the weighted dual, zeta = -mu / weight
    zeta = np.zeros(grid.n_x + 1)
    zeta[1:-1] = -mu / w_int
    comp = float(np.max(np.abs(zeta * (u_next.values + phys.H))))

    return StepResult(
        state=u_next,
        multiplier=zeta,
        velocity=diff / delta,
        energy_mechanical=em,
        energy_electrostatic=ee,
        energy_total=e_total,
        dissipation=diss,
        fp_iters=fp_iters,
        as_iters=as_total,
        energy_decrease_ok=bool(diss + e_total <= energy_n + slack),
        complementarity_residual=comp,
        backtrack_lambda=lam,
    )


def gronwall_envelope(u0_l2_sq: float, energy0: float, c1: float, t: float) -> float:
    """A-priori L2 envelope (6||u0||^2 + 2 + 2 E(u0)/c1) exp(16 c1 t)."""
    if c1 <= 0.0:
        return math.inf
    try:
        growth = math.exp(16.0 * c1 * t)
    except OverflowError:
        return math.inf
    return (6.0 * u0_l2_sq + 2.0 + 2.0 * energy0 / c1) * growth


def run(u0: BeamState, delta: float, t_end: float, ctx: SimulationContext,
        record_states: bool = True) -> SimulationTrace:
    """Iterate the implicit step to t_end, monitoring the a-priori bounds.

    A step failure aborts the run; the partial trace is attached to the
    raised StepError as ``partial_trace``.
    """
    if not u0.is_admissible(ctx.cfg.physical.H):
        raise ValueError("initial state is not admissible")
    consts = ctx.constants
    if delta > consts.delta0:
        # allowed, but outside the regime where the step functional is
        # provably bounded below
        import warnings
        warnings.warn(f"delta = {delta} exceeds delta0 = {consts.delta0:.6g}")

    _, _, e0 = total_energy(u0, ctx)
    w = ctx.grid.quad_weights
    l2sq0 = float(np.dot(w, u0.values ** 2))

    trace = SimulationTrace(delta=delta, energy0=e0, constants=consts)
    trace.times.append(0.0)
    trace.states.append(u0.values.copy())
    trace.cumulative_dissipation.append(0.0)
    trace.l2_sq.append(l2sq0)
    trace.envelope_bound.append(gronwall_envelope(l2sq0, e0, consts.c1, 0.0))

    n_steps = max(1, int(round(t_end / delta)))
    u = u0
    energy = e0
    cum = 0.0
    for n in range(1, n_steps + 1):
        try:
            result = step(u, delta, ctx, energy_n=energy)
        except StepError as err:
            trace.aborted = True
            trace.error = str(err)
            err.partial_trace = trace
            raise
        u = result.state
        energy = result.energy_total
        # (1/2 delta)||u_{n+1} - u_n||^2 summed over steps: the discrete
        # counterpart of (1/2) int ||du/dt||^2
        cum += result.dissipation
        t = n * delta
        trace.times.append(t)
        if record_states or n == n_steps:
            trace.states.append(u.values.copy())
        trace.steps.append(result)
        trace.cumulative_dissipation.append(cum)
        trace.l2_sq.append(float(np.dot(w, u.values ** 2)))
        trace.envelope_bound.append(gronwall_envelope(l2sq0, e0, consts.c1, t))
    return trace
