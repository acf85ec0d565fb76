"""Executable checks of energy bounds and qualitative properties of minimisers.

Every check returns a DiagnosticReport with status "pass", "fail" or "n/a"
(not applicable).  Nothing here is randomised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .core import DIRICHLET, FREE_BOUNDARY, DomainError, unit_ball_volume
from .minimiser import GridFunction, Interval, RadialDisk, discrete_laplacian
from .radial import RadialCandidate, infimum_navier2d

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "n/a"
ENERGY_ATOL = 1e-9


@dataclass(frozen=True)
class DiagnosticReport:
    name: str
    lhs: float
    rhs: float
    relation: str
    status: str
    context: str = ""
    details: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relation": self.relation,
            "status": self.status,
            "context": self.context,
            **({"details": self.details} if self.details else {}),
        }


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


# ---------------------------------------------------------------------------
# energy bounds
# ---------------------------------------------------------------------------

def navier_upper_bound(energy_total: float, domain_measure: float) -> DiagnosticReport:
    """inf F <= |Omega| under Navier data (the harmonic extension competes).

    ``details["flat_set_forced"]`` is the dichotomy flag: an energy strictly
    below |Omega| forces a flat set of positive measure.
    """
    if energy_total < 0 or domain_measure < 0:
        raise DomainError("energy and domain measure must be >= 0")
    return DiagnosticReport(
        "navier_upper_bound", float(energy_total), float(domain_measure), "<=",
        _status(energy_total <= domain_measure + ENERGY_ATOL),
        "infimum under Navier data is at most the domain measure",
        {"flat_set_forced": bool(energy_total < domain_measure)},
    )


def dirichlet_lower_bound(boundary_flux_integral: float, domain_measure: float,
                          energy_total: float) -> DiagnosticReport:
    """F(u) >= (int_dOmega grad phi . nu)^2 / |Omega| under Dirichlet data."""
    if not domain_measure > 0:
        raise DomainError(f"domain_measure must be > 0, got {domain_measure}")
    bound = boundary_flux_integral**2 / domain_measure
    return DiagnosticReport(
        "dirichlet_lower_bound", float(energy_total), float(bound), ">=",
        _status(energy_total >= bound - ENERGY_ATOL),
        "Cauchy-Schwarz bound from the boundary flux of the datum",
        {"boundary_flux": float(boundary_flux_integral)},
    )


def distance_datum_bound(k: float, perimeter: float, domain_measure: float) -> float:
    """Lower bound k^2 P^2 / |Omega| for data eps + k d_Omega (normal derivative k on the boundary)."""
    if not domain_measure > 0:
        raise DomainError(f"domain_measure must be > 0, got {domain_measure}")
    return (k * perimeter) ** 2 / domain_measure


def smoothstep_template_constant(n: int = 2, u0: float = 1.0) -> float:
    """int (Lap v1)^2 over B_2 for the template v1 = u0 S(|x| - 1), S(t) = 3t^2 - 2t^3.

    v1 vanishes on B_1, is C^1 with piecewise smooth second derivatives (so
    H^2), and meets the Dirichlet data v1 = u0, dv1/dr = 0 on |x| = 2.
    """
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    area = n * unit_ball_volume(n)

    def lap(r):
        t = r - 1.0
        return u0 * ((6 - 12 * t) + (n - 1) / r * (6 * t - 6 * t**2))

    val, _ = integrate.quad(lambda r: lap(r) ** 2 * area * r ** (n - 1), 1.0, 2.0,
                            epsabs=1e-14, epsrel=1e-13)
    return val


def smoothstep_template(r, u0: float = 1.0):
    """The template v1 itself, for plotting and cross-checks."""
    t = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return u0 * t**2 * (3 - 2 * t)


def flat_set_lower_bound(R: float, C1_const: float, n: int, measured: Optional[float] = None,
                         tolerance: float = 0.0) -> DiagnosticReport:
    """|{u = 0}| >= (e_n R^4 - C1) R^(n-4) on the dilated domain R * Omega.

    Below the threshold R^4 = C1 / e_n the bound is vacuous and reported as 0.
    Without a measured flat set the report only carries the bound (n/a).
    """
    if not R > 0:
        raise DomainError(f"R must be > 0, got {R}")
    if not C1_const > 0:
        raise DomainError(f"C1 must be > 0, got {C1_const}")
    en = unit_ball_volume(n)
    raw = (en * R**4 - C1_const) * R ** (n - 4)
    vacuous = raw <= 0
    bound = 0.0 if vacuous else raw
    details = {"vacuous": bool(vacuous), "threshold_R": (C1_const / en) ** 0.25}
    if measured is None:
        return DiagnosticReport("flat_set_lower_bound", math.nan, bound, ">=", NOT_APPLICABLE,
                                "no measured flat set supplied", details)
    return DiagnosticReport(
        "flat_set_lower_bound", float(measured), bound, ">=",
        _status(measured >= bound - tolerance),
        "flat-set measure of a minimiser on the dilated domain", details,
    )


# ---------------------------------------------------------------------------
# structure of the flat set and of the Laplacian
# ---------------------------------------------------------------------------

def _hessian_entries(u: GridFunction) -> np.ndarray:
    """Largest |discrete second derivative| per node (u'' and, on disks, u'/r)."""
    v, h = u.values, u.geometry.h
    out = np.full(v.size, np.nan)
    out[1:-1] = np.abs(v[:-2] - 2 * v[1:-1] + v[2:]) / h**2
    if isinstance(u.geometry, RadialDisk):
        r = u.geometry.nodes
        tangential = np.abs(v[2:] - v[:-2]) / (2 * h * r[1:-1])
        out[1:-1] = np.maximum(out[1:-1], tangential)
        out[0] = 2 * abs(v[1] - v[0]) / h**2
    return out


STAMPACCHIA_MARGIN = 2


def stampacchia_check(u: GridFunction, flat_threshold: float, scale: Optional[float] = None,
                      margin: int = STAMPACCHIA_MARGIN) -> DiagnosticReport:
    """Second derivatives vanish inside the flat set {|u| < flat_threshold}.

    Only nodes whose whole second-difference stencil lies ``margin`` cells
    inside the flat set are examined.  Pass iff the sup is below 10 h^2 scale,
    with scale = u0 unless given.
    """
    if not flat_threshold > 0:
        raise DomainError(f"flat_threshold must be > 0, got {flat_threshold}")
    g = u.geometry
    scale = abs(u.u0) if scale is None else scale
    flat = np.abs(u.values) < flat_threshold
    reach = margin + 1
    if isinstance(g, RadialDisk):
        # the centre is interior to the ball: mirror the flat flags across r = 0
        ext = np.concatenate([flat[reach:0:-1], flat])
        offset = reach
    else:
        ext, offset = flat, 0
    windows = np.lib.stride_tricks.sliding_window_view(ext, 2 * reach + 1).all(axis=1)
    interior = np.zeros(g.m, dtype=bool)
    lo = reach - offset
    interior[lo:lo + windows.size] = windows
    idx = np.flatnonzero(interior)
    tol = 10 * g.h**2 * scale
    if idx.size == 0:
        return DiagnosticReport("stampacchia", math.nan, tol, "<=", NOT_APPLICABLE,
                                "no strictly interior flat node")
    sup = float(np.max(_hessian_entries(u)[idx]))
    return DiagnosticReport("stampacchia", sup, tol, "<=", _status(sup < tol),
                            "second derivatives vanish a.e. on the flat set",
                            {"interior_nodes": int(idx.size)})


def laplacian_jump(candidate: RadialCandidate) -> DiagnosticReport:
    """Lap u jumps across the free boundary: Lap u(rho-) = 0 while Lap u(rho+) != 0.

    For Dirichlet candidates the sign change Lap u(rho+) * Lap u(R-) < 0 is
    required as well.
    """
    c = candidate
    if c.is_constant or not c.rho > 0:
        return DiagnosticReport("laplacian_jump", math.nan, 0.0, "!=", NOT_APPLICABLE,
                                "constant candidate has no free boundary")
    outside = float(c.laplacian_outside(c.rho))
    at_boundary = float(c.laplacian_outside(c.R))
    ok = abs(outside) > 1e-6 * abs(c.u0)
    details = {"laplacian_inside": 0.0, "laplacian_at_boundary": at_boundary}
    if c.bc == DIRICHLET:
        sign = outside * at_boundary
        details["sign_product"] = sign
        ok = ok and sign < 0
    return DiagnosticReport("laplacian_jump", outside, 0.0, "!=", _status(ok),
                            "Laplacian is discontinuous across the free boundary", details)


def sign_change_certificate(candidate: RadialCandidate) -> DiagnosticReport:
    """Lap u(rho+) * Lap u(R-) < 0 for a nonconstant Dirichlet candidate."""
    c = candidate
    if c.is_constant:
        return DiagnosticReport("sign_change", math.nan, 0.0, "<", NOT_APPLICABLE,
                                "constant candidate")
    prod = float(c.laplacian_outside(c.rho)) * float(c.laplacian_outside(c.R))
    return DiagnosticReport("sign_change", prod, 0.0, "<", _status(prod < 0),
                            "Laplacian changes sign between free boundary and outer boundary")


# ---------------------------------------------------------------------------
# mean oscillation of the Laplacian
# ---------------------------------------------------------------------------

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)
ANGLES = 64
MAX_CENTRES = 48


def _ball_oscillation_2d(lap_of_r, x0: float, r: float) -> float:
    # polar Gauss rule on B_r((x0, 0)): Gauss-Legendre in s, trapezoid (spectral) in angle
    s = 0.5 * r * (_GAUSS_X + 1)
    ws = 0.5 * r * _GAUSS_W * s
    th = np.linspace(0, 2 * np.pi, ANGLES, endpoint=False)
    S, T = np.meshgrid(s, th, indexing="ij")
    W = np.outer(ws, np.full(ANGLES, 2 * np.pi / ANGLES))
    rad = np.hypot(x0 + S * np.cos(T), S * np.sin(T))
    f = lap_of_r(rad)
    mean = np.sum(W * f) / np.sum(W)
    return float(np.sum(W * (f - mean) ** 2))


def _ball_oscillation_1d(lap_of_x, x0: float, r: float) -> float:
    x = x0 + r * _GAUSS_X
    w = r * _GAUSS_W
    f = lap_of_x(x)
    mean = np.sum(w * f) / np.sum(w)
    return float(np.sum(w * (f - mean) ** 2))


def bmo_profile(u: GridFunction, radii: Sequence[float]) -> list:
    """[(r, sup_x0 int_{B_r(x0)} |Lap u - mean|^2 / r^n)] over centres with dist(x0, boundary) >= 3r.

    The nodal discrete Laplacian is interpolated linearly in the radius.
    Centres are sampled along a ray (the function is radial).  Radii with no
    admissible centre are skipped.
    """
    g = u.geometry
    lap = discrete_laplacian(u)
    out = []
    if isinstance(g, Interval):
        x = g.nodes
        lap_of = lambda p: np.interp(p, x, lap)
        osc = _ball_oscillation_1d
        n, lo = 1, -g.R
    elif g.n == 2:
        lap_of = lambda p: np.interp(p, g.nodes, lap)
        osc = _ball_oscillation_2d
        n, lo = 2, 0.0
    else:
        raise DomainError("mean-oscillation profile is implemented for n = 1 and n = 2")
    for r in radii:
        if not r > 0:
            raise DomainError(f"radii must be > 0, got {r}")
        hi = g.R - 3 * r
        start = -hi if n == 1 else lo
        if hi < start or hi < 0:
            continue
        centres = np.linspace(start, hi, MAX_CENTRES) if hi > start else np.array([start])
        worst = max(osc(lap_of, c, r) for c in centres)
        out.append((float(r), worst / r**n))
    return out


# ---------------------------------------------------------------------------
# monotonicity of the infimum in u0
# ---------------------------------------------------------------------------

STRICT_TOL = 1e-10
SATURATION_TOL = 1e-12


def infimum_monotonicity(u0_grid: Sequence[float], lam: float = 1.0) -> DiagnosticReport:
    """u0 -> inf_rho f_lambda(u0, rho), capped at lambda pi, is nondecreasing.

    It must increase strictly at every FreeBoundary index and sit at
    lambda pi once saturated.
    """
    grid = np.asarray(u0_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("u0_grid must be a nonempty 1-d sequence")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("u0_grid must be positive and strictly increasing")
    reports = [infimum_navier2d(float(z), lam) for z in grid]
    energies = np.array([r.energy.total for r in reports])
    decisions = [r.decision for r in reports]
    steps = np.diff(energies)
    ok = bool(np.all(steps >= 0))
    for i in range(1, grid.size):
        if decisions[i] == FREE_BOUNDARY and not steps[i - 1] > STRICT_TOL:
            ok = False
    cap = lam * math.pi
    saturated = [i for i, d in enumerate(decisions) if d != FREE_BOUNDARY and d != "Tie"]
    if any(abs(energies[i] - cap) > SATURATION_TOL for i in saturated):
        ok = False
    min_step = float(steps.min()) if steps.size else 0.0
    return DiagnosticReport(
        "infimum_monotonicity", min_step, 0.0, ">=", _status(ok),
        "infimum energy is nondecreasing in the boundary value",
        {"u0": grid.tolist(), "energy": energies.tolist(), "decision": decisions},
    )
