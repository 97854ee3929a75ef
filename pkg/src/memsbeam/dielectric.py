"""Permittivity field and the deflection-dependent Dirichlet boundary data.

The layer permittivity sigma1 comes from a small named family of horizontal
profiles; the gap permittivity sigma2 is a constant.  The boundary-data
pair (h1, h2) carries the plate potential down the lateral boundaries and
must satisfy value continuity and flux matching across the layer surface
z = -H.  For z-independent sigma1 the canonical closed-form construction is
built in (a two-layer capacitor solution per x-column); its derivative
bounds are estimated numerically on a certified deflection range, yielding
the constants (m1, m2, m3) that the admissible-step-size estimate consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from memsbeam.config import DielectricSettings, PhysicalParams

__all__ = [
    "SigmaProfile",
    "PermittivityModel",
    "BoundaryDataModel",
    "make_permittivity",
    "example55_model",
    "check_transmission_compat",
    "estimate_m_constants",
]


@dataclass(frozen=True)
class SigmaProfile:
    """Horizontal permittivity profile sigma1(x) with exact derivative."""

    kind: str
    a: float
    b: float
    L: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(np.float64(self.a), x.shape).copy()
        if self.kind == "affine":
            return self.a + self.b * x
        if self.kind == "bump":
            return self.a + self.b * np.cos(np.pi * x / (2.0 * self.L)) ** 2
        raise ValueError(f"unknown profile kind {self.kind!r}")

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "affine":
            return np.full_like(x, self.b)
        if self.kind == "bump":
            k = np.pi / (2.0 * self.L)
            return -self.b * k * np.sin(2.0 * k * x)
        raise ValueError(f"unknown profile kind {self.kind!r}")


@dataclass(frozen=True)
class PermittivityModel:
    """sigma1(x, z) on the closed layer rectangle, constant sigma2 above,
    with certified bounds sigma_min <= sigma <= sigma_max."""

    sigma1: Callable  # (x, z) -> sigma1
    sigma2: float
    sigma_min: float
    sigma_max: float
    # closed-form construction requires sigma1 = sigma1(x); set when available
    sigma1_x: Optional[SigmaProfile] = field(default=None, repr=False)

    @property
    def z_independent(self) -> bool:
        return self.sigma1_x is not None


def make_permittivity(diel: DielectricSettings, phys: PhysicalParams,
                      n_samples: int = 257) -> PermittivityModel:
    """Build a PermittivityModel from config, certifying the bounds by
    sampling the profile on a closed grid over [-L, L]."""
    profile = SigmaProfile(diel.sigma1_profile, diel.sigma1_a, diel.sigma1_b, phys.L)
    xs = np.linspace(-phys.L, phys.L, n_samples)
    vals = profile(xs)
    if np.min(vals) <= 0.0:
        raise ValueError("sigma1 profile is not positive on [-L, L]")
    sigma_min = float(min(np.min(vals), diel.sigma2))
    sigma_max = float(max(np.max(vals), diel.sigma2))

    def sigma1(x, z):
        return profile(x)

    return PermittivityModel(sigma1=sigma1, sigma2=diel.sigma2,
                             sigma_min=sigma_min, sigma_max=sigma_max,
                             sigma1_x=profile)


@dataclass(frozen=True)
class BoundaryDataModel:
    """The pair (h1, h2) with partial derivatives and bound constants.

    h1(x, z, w) lives on the layer rectangle, h2(x, z, w) on the gap, with
    w the local deflection value.  Zero on the bottom plate, V on the
    moving plate, continuous with matched flux across z = -H.
    """

    h1: Callable
    h2: Callable
    dx_h1: Callable
    dz_h1: Callable
    dw_h1: Callable
    dx_h2: Callable
    dz_h2: Callable
    dw_h2: Callable
    V: float
    m1: Optional[float] = None
    m2: Optional[float] = None
    m3: Optional[float] = None


def example55_model(perm: PermittivityModel, phys: PhysicalParams) -> BoundaryDataModel:
    """Closed-form boundary data for z-independent sigma1.

    Per x-column this is the exact two-layer capacitor potential between
    plate value V at z = w and 0 at z = -H-d:

        h1 = V*sigma2*(H+z+d) / S,   h2 = V*(sigma2*d + sigma1(x)*(H+z)) / S,

    with S(x, w) = sigma2*d + sigma1(x)*(H+w).  All partials are exact.
    """
    if not perm.z_independent:
        raise ValueError("closed-form boundary data requires z-independent sigma1")
    s1 = perm.sigma1_x
    s2 = perm.sigma2
    H, d, V = phys.H, phys.d, phys.V

    def S(x, w):
        return s2 * d + s1(x) * (H + w)

    def h1(x, z, w):
        return V * s2 * (H + np.asarray(z) + d) / S(x, w)

    def dx_h1(x, z, w):
        return -V * s2 * (H + np.asarray(z) + d) * s1.deriv(x) * (H + np.asarray(w)) / S(x, w) ** 2

    def dz_h1(x, z, w):
        return (V * s2 / S(x, w)) * np.ones_like(np.asarray(z, dtype=float))

    def dw_h1(x, z, w):
        return -V * s2 * (H + np.asarray(z) + d) * s1(x) / S(x, w) ** 2

    def h2(x, z, w):
        return V * (s2 * d + s1(x) * (H + np.asarray(z))) / S(x, w)

    def dx_h2(x, z, w):
        z = np.asarray(z, dtype=float)
        Sv = S(x, w)
        return V * s1.deriv(x) * ((H + z) * Sv - (s2 * d + s1(x) * (H + z)) * (H + np.asarray(w))) / Sv ** 2

    def dz_h2(x, z, w):
        return (V * s1(x) / S(x, w)) * np.ones_like(np.asarray(z, dtype=float))

    def dw_h2(x, z, w):
        return -V * (s2 * d + s1(x) * (H + np.asarray(z))) * s1(x) / S(x, w) ** 2

    return BoundaryDataModel(h1=h1, h2=h2, dx_h1=dx_h1, dz_h1=dz_h1, dw_h1=dw_h1,
                             dx_h2=dx_h2, dz_h2=dz_h2, dw_h2=dw_h2, V=V)


def check_transmission_compat(model: BoundaryDataModel, perm: PermittivityModel,
                              phys: PhysicalParams, samples: int = 33,
                              w_max: float = 1.0) -> dict:
    """Sample (x, w) over [-L, L] x [-H, w_max] and report the worst
    violation of value continuity and flux matching at z = -H, plus the
    plate/bottom anchoring identities."""
    xs = np.linspace(-phys.L, phys.L, samples)
    ws = np.linspace(-phys.H, w_max, samples)
    X, W = np.meshgrid(xs, ws, indexing="ij")
    zH = -phys.H

    cont = np.abs(model.h1(X, zH, W) - model.h2(X, zH, W))
    s1H = perm.sigma1(X, zH)
    flux = np.abs(s1H * model.dz_h1(X, zH, W) - perm.sigma2 * model.dz_h2(X, zH, W))
    bottom = np.abs(model.h1(X, -phys.H - phys.d, W))
    plate = np.abs(model.h2(X, W, W) - model.V)

    return {
        "max_continuity_violation": float(np.max(cont)),
        "max_flux_violation": float(np.max(flux)),
        "max_bottom_violation": float(np.max(bottom)),
        "max_plate_violation": float(np.max(plate)),
        "samples": samples,
    }


def estimate_m_constants(model: BoundaryDataModel, phys: PhysicalParams,
                         w_max: float, w_min: Optional[float] = None,
                         n_x: int = 41, n_z: int = 33, n_w: int = 33,
                         inflate: float = 1.05) -> tuple[float, float, float]:
    """Numerically estimate the smallest constants (m1, m2, m3) such that

        |dx h1| + |dz h1| <= sqrt(m1 + m2 w^2),    |dw h1| <= sqrt(m3),
        |dx h2| + |dz h2| <= sqrt((m1 + m2 w^2)/(H+w)),
        |dw h2| <= sqrt(m3/(H+w)),

    hold on the sampled grid over x in [-L, L], z in each vertical domain
    and w in [w_min, w_max] (w_min defaults to -H).  The estimates are
    inflated by 5% so that small sampling gaps do not break the bounds.
    """
    H, d, L = phys.H, phys.d, phys.L
    if w_min is None:
        w_min = -H
    if w_max < w_min:
        raise ValueError("w_max below w_min")

    xs = np.linspace(-L, L, n_x)
    ws = np.linspace(w_min, w_max, n_w) if w_max > w_min else np.array([w_min])
    z1 = np.linspace(-H - d, -H, n_z)

    # F(w): the tightest admissible value of m1 + m2 w^2 at this w.
    F = np.zeros(ws.shape)
    m3_req = 0.0
    for k, w in enumerate(ws):
        X1, Z1 = np.meshgrid(xs, z1, indexing="ij")
        g1 = (np.abs(model.dx_h1(X1, Z1, w)) + np.abs(model.dz_h1(X1, Z1, w))) ** 2
        req = np.max(g1)
        m3_req = max(m3_req, float(np.max(model.dw_h1(X1, Z1, w) ** 2)))

        gap = H + w
        if gap > 0.0:
            z2 = np.linspace(-H, w, n_z)
            X2, Z2 = np.meshgrid(xs, z2, indexing="ij")
            g2 = gap * (np.abs(model.dx_h2(X2, Z2, w)) + np.abs(model.dz_h2(X2, Z2, w))) ** 2
            req = max(req, float(np.max(g2)))
            m3_req = max(m3_req, float(gap * np.max(model.dw_h2(X2, Z2, w) ** 2)))
        F[k] = req

    if not np.all(np.isfinite(F)) or not np.isfinite(m3_req):
        raise ValueError("non-finite derivative sample in m-constant estimation")

    # Anchor at the w closest to zero; m2 absorbs the growth relative to it.
    k0 = int(np.argmin(np.abs(ws)))
    F0, w0 = F[k0], ws[k0]
    m2 = 0.0
    for k, w in enumerate(ws):
        dw2 = w ** 2 - w0 ** 2
        if dw2 > 1e-14:
            m2 = max(m2, (F[k] - F0) / dw2)
    m1 = float(np.max(F - m2 * ws ** 2))
    return (inflate * m1, inflate * m2, inflate * m3_req)
