"""Analytic oracles and run checkers.

The flat-plate oracle evaluates the exact two-layer capacitor solution for
a constant deflection.  The ledger checker verifies per-step and cumulative
energy decrease, the energy lower bound and the a-priori L2 envelope on a
completed trace.  The multiplier checker verifies the discrete KKT triple
and support localization.  The convergence study runs a manufactured
solution through the transmission solver over mesh doublings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import sympy as sym
from scipy.integrate import quad

from memsbeam.beam import BeamState, h2_seminorms
from memsbeam.config import PhysicalParams
from memsbeam.dielectric import PermittivityModel
from memsbeam.electrostatics import force
from memsbeam.scheme import SimulationContext, SimulationTrace, StepResult
from memsbeam.transmission import build_mesh, solve_potential

__all__ = [
    "CheckReport",
    "flat_plate_oracle",
    "check_energy_ledger",
    "check_multiplier",
    "support_radius",
    "mms_transmission_error",
    "convergence_study",
]


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    value: float
    bound: float
    tolerance: float
    context: str = ""

    @staticmethod
    def of(name: str, value: float, bound: float, tolerance: float,
           context: str = "") -> "CheckReport":
        return CheckReport(name=name, passed=bool(value <= bound + tolerance),
                           value=float(value), bound=float(bound),
                           tolerance=float(tolerance), context=context)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        ctx = f" [{self.context}]" if self.context else ""
        return (f"{status}  {self.name}: value={self.value:.6e} "
                f"bound={self.bound:.6e} tol={self.tolerance:.1e}{ctx}")


def flat_plate_oracle(phys: PhysicalParams, perm: PermittivityModel, w: float) -> dict:
    """Exact quantities for a constant deflection u = w > -H with
    z-independent sigma1: potential, traces, force, and the energy
    aggregated by x-quadrature when sigma1 varies in x."""
    if w <= -phys.H:
        raise ValueError("flat-plate oracle requires w > -H")
    if not perm.z_independent:
        raise ValueError("flat-plate oracle requires z-independent sigma1")
    s1 = perm.sigma1_x
    s2 = perm.sigma2
    H, d, V, L = phys.H, phys.d, phys.V, phys.L

    def S(x):
        return s2 * d + s1(x) * (H + w)

    def psi(x, z):
        z = np.asarray(z, dtype=float)
        low = V * s2 * (H + z + d) / S(x)
        high = V * (s2 * d + s1(x) * (H + z)) / S(x)
        return np.where(z <= -H, low, high)

    def plate_trace(x):
        return V * s1(x) / S(x)

    def layer_trace(x):
        return V * s2 / S(x)

    def force_profile(x):
        return 0.5 * s2 * plate_trace(x) ** 2

    energy, _ = quad(lambda x: V ** 2 * float(s1(x)) * s2 / float(S(x)), -L, L,
                     epsabs=1e-13, epsrel=1e-13)
    return {
        "psi": psi,
        "plate_trace": plate_trace,
        "layer_trace": layer_trace,
        "force": force_profile,
        "energy": -0.5 * energy,
    }


def check_energy_ledger(trace: SimulationTrace, ctx: SimulationContext) -> list[CheckReport]:
    """Per-step decrease, cumulative inequality, energy floor and envelope."""
    reports: list[CheckReport] = []
    num = ctx.cfg.numerical
    phys = ctx.cfg.physical
    c1 = trace.constants.c1 if trace.constants else 0.0
    slack = 10.0 * num.tol_fp

    prev_energy = trace.energy0
    worst_step = -math.inf
    worst_idx = 0
    worst_cum = -math.inf
    worst_floor = math.inf
    worst_env = -math.inf
    for n, s in enumerate(trace.steps, start=1):
        excess = s.dissipation + s.energy_total - prev_energy
        if excess > worst_step:
            worst_step, worst_idx = excess, n
        cum_excess = trace.cumulative_dissipation[n] + s.energy_total - trace.energy0
        worst_cum = max(worst_cum, cum_excess)
        prev_energy = s.energy_total

        l2, _, d2 = h2_seminorms(s.state)
        floor = 0.25 * phys.beta * d2 ** 2 - c1 * (1.0 + l2 ** 2)
        worst_floor = min(worst_floor, s.energy_total - floor)

        env = trace.envelope_bound[n]
        if math.isfinite(env):
            worst_env = max(worst_env, trace.l2_sq[n] - env)

    n_steps = max(1, len(trace.steps))
    reports.append(CheckReport.of("per-step energy decrease", worst_step, 0.0, slack,
                                  context=f"worst step {worst_idx}"))
    reports.append(CheckReport.of("cumulative energy inequality", worst_cum, 0.0,
                                  n_steps * slack))
    reports.append(CheckReport.of("energy lower-bound floor", -worst_floor, 0.0,
                                  1e-9 * (1.0 + abs(trace.energy0))))
    if worst_env > -math.inf:
        reports.append(CheckReport.of("L2 a-priori envelope", worst_env, 0.0, 0.0))
    else:
        reports.append(CheckReport("L2 a-priori envelope (vacuous, c1 = 0)", True,
                                   0.0, math.inf, 0.0))
    return reports


def h2_norm_bound(trace: SimulationTrace, grid) -> float:
    """Max discrete H2 norm over the recorded trajectory."""
    best = 0.0
    for vals in trace.states:
        l2, l2d, l2dd = h2_seminorms(BeamState(grid, vals))
        best = max(best, math.sqrt(l2 ** 2 + l2d ** 2 + l2dd ** 2))
    return best


def support_radius(L: float, H: float, K: float) -> float:
    """x_T = max{L - (H/2K)^(2/3), L/2}: the multiplier is supported in
    [-x_T, x_T] for any trajectory with H2 norm at most K."""
    if K <= 0.0:
        return 0.5 * L
    return max(L - (H / (2.0 * K)) ** (2.0 / 3.0), 0.5 * L)


def check_multiplier(result: StepResult, ctx: SimulationContext, K: float) -> list[CheckReport]:
    """KKT triple, support-in-coincidence-set and the [-x_T, x_T]
    localization computed from the measured H2 bound K."""
    phys, num = ctx.cfg.physical, ctx.cfg.numerical
    grid = ctx.grid
    zeta = result.multiplier
    u = result.state.values
    reports: list[CheckReport] = []

    reports.append(CheckReport.of("multiplier sign (-zeta >= 0)",
                                  float(np.max(zeta)), 0.0, num.tol_as))
    reports.append(CheckReport.of("complementarity zeta*(u+H)",
                                  result.complementarity_residual, 0.0, num.tol_as))

    supp = np.abs(zeta) > num.tol_as
    gap_on_support = float(np.max(u[supp] + phys.H)) if supp.any() else 0.0
    reports.append(CheckReport.of("support inside coincidence set",
                                  gap_on_support, num.eps_gap, 0.0))

    x_t = support_radius(phys.L, phys.H, K)
    supp_radius_meas = float(np.max(np.abs(grid.nodes[supp]))) if supp.any() else 0.0
    reports.append(CheckReport.of("support inside [-x_T, x_T]",
                                  supp_radius_meas, x_t, 0.0,
                                  context=f"x_T={x_t:.4f} K={K:.4f}"))

    mass = float(np.dot(grid.quad_weights, -zeta))
    reports.append(CheckReport("multiplier total mass", True, mass, math.inf, 0.0,
                               context="reported"))
    return reports


# ---------------------------------------------------------------------------
# manufactured solution for the transmission solver

def _mms_fields(phys: PhysicalParams, sigma2: float):
    """Symbolic manufactured potential with exactly matched interface data.

    psi1 = B + sigma2  * (A (z+H) + C (z+H)^2)  in the layer,
    psi2 = B + sigma1(x) * (A (z+H) + C (z+H)^2)  in the gap,

    which is continuous with matched flux at z = -H for any smooth A, B, C
    and any sigma1(x).  Residuals of div(sigma grad psi) move to sources.
    """
    x, z = sym.symbols("x z", real=True)
    H = sym.Float(phys.H)
    s1 = 1 + sym.Rational(1, 5) * x
    A = sym.sin(sym.Rational(3, 2) * x) + 2
    B = sym.Rational(2, 5) * sym.cos(x)
    C = sym.Rational(3, 10) * sym.cos(2 * x)

    shape = A * (z + H) + C * (z + H) ** 2
    psi1 = B + sigma2 * shape
    psi2 = B + s1 * shape

    f1 = sym.diff(s1 * sym.diff(psi1, x), x) + sym.diff(s1 * sym.diff(psi1, z), z)
    f2 = sigma2 * (sym.diff(psi2, x, 2) + sym.diff(psi2, z, 2))

    mods = ["numpy"]
    return {
        "sigma1": sym.lambdify((x, z), s1, mods),
        "psi1": sym.lambdify((x, z), psi1, mods),
        "psi2": sym.lambdify((x, z), psi2, mods),
        "f1": sym.lambdify((x, z), f1, mods),
        "f2": sym.lambdify((x, z), f2, mods),
    }


def mms_transmission_error(phys: PhysicalParams, n: int, sigma2: float = 2.0) -> float:
    """L2 error of the transmission solve against the manufactured solution
    on a mesh with n intervals in every direction."""
    from memsbeam.beam import BeamGrid
    from memsbeam.config import NumericalParams
    from memsbeam.dielectric import BoundaryDataModel

    fields = _mms_fields(phys, sigma2)
    grid = BeamGrid(phys.L, n)
    num = NumericalParams(n_x=n, n_z_layer=n, n_eta_gap=n, eps_gap=1e-6 * phys.H,
                          delta=1e-2)
    x = grid.nodes / phys.L
    u = BeamState(grid, -0.3 * phys.H * (1.0 - x ** 2) ** 2)

    perm = PermittivityModel(
        sigma1=lambda xx, zz: np.asarray(fields["sigma1"](xx, zz)) + 0.0 * np.asarray(zz),
        sigma2=sigma2, sigma_min=0.5, sigma_max=3.0)

    def dirichlet(xx, zz):
        if zz <= -phys.H:
            return fields["psi1"](xx, zz)
        return fields["psi2"](xx, zz)

    # boundary data unused when a full Dirichlet override is given
    dummy = BoundaryDataModel(*([None] * 8), V=1.0)

    mesh = build_mesh(u, phys, num)
    sol = solve_potential(mesh, perm, dummy, u, tol=1e-12,
                          source_layer=fields["f1"], source_gap=fields["f2"],
                          dirichlet=dirichlet)

    xs = grid.nodes
    X1, Z1 = np.meshgrid(xs, mesh.z_layer, indexing="ij")
    err1 = sol.psi1 - fields["psi1"](X1, Z1)
    wx = grid.quad_weights
    wz = np.full(mesh.n_z + 1, mesh.dz)
    wz[0] = wz[-1] = 0.5 * mesh.dz
    sq = float(wx @ err1 ** 2 @ wz)

    g = mesh.heights
    Zg = -phys.H + np.outer(g, mesh.eta)
    exact2 = fields["psi2"](xs[:, None], Zg)
    err2 = sol.phi2 - exact2
    weta = np.full(mesh.n_eta + 1, mesh.d_eta)
    weta[0] = weta[-1] = 0.5 * mesh.d_eta
    sq += float(wx @ ((err2 ** 2) * g[:, None]) @ weta)
    return math.sqrt(sq)


def observed_orders(errors: list[float]) -> list[float]:
    return [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]


def convergence_study(phys: PhysicalParams, perm: Optional[PermittivityModel] = None,
                      levels: int = 3, n0: int = 16) -> dict:
    """Mesh-doubling study: manufactured-solution errors and orders for the
    transmission solver, plus flat-plate force exactness when a
    z-independent permittivity model is supplied."""
    if levels < 3:
        raise ValueError("levels >= 3 required")
    ns = [n0 * 2 ** k for k in range(levels + 1)]
    errors = [mms_transmission_error(phys, n) for n in ns]
    out = {"ns": ns, "mms_errors": errors, "mms_orders": observed_orders(errors)}

    if perm is not None and perm.z_independent:
        from memsbeam.config import NumericalParams
        from memsbeam.beam import BeamGrid
        from memsbeam.dielectric import example55_model
        bdata = example55_model(perm, phys)
        oracle = flat_plate_oracle(phys, perm, w=0.0)
        flat_errors = []
        for n in ns:
            grid = BeamGrid(phys.L, n)
            num = NumericalParams(n_x=n, n_z_layer=max(8, n // 2),
                                  n_eta_gap=max(8, n // 2),
                                  eps_gap=1e-6 * phys.H, delta=1e-2)
            state = BeamState(grid, np.zeros(n + 1))
            mesh = build_mesh(state, phys, num)
            sol = solve_potential(mesh, perm, bdata, state, tol=1e-12)
            fp = force(sol, state, perm, mesh)
            exact = oracle["force"](grid.nodes[1:-1])
            flat_errors.append(float(np.max(np.abs(fp.values[1:-1] - exact))))
        out["flat_plate_force_errors"] = flat_errors
    return out


def steady_state_residual(trace: SimulationTrace) -> float:
    """Sup-norm time increment per unit time at the final step: a proxy for
    stationarity of the discrete flow."""
    if len(trace.states) < 2:
        return math.inf
    last = np.max(np.abs(trace.states[-1] - trace.states[-2]))
    return float(last / trace.delta)
