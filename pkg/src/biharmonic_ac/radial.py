"""Closed-form radial minimisers of F_lambda(u) = int (Lap u)^2 + lambda |{u != 0}|.

Covers the interval (-R, R) under Navier data u(+-R) = 1, u''(+-R) = 0 and
the unit disk in R^2 under constant Navier or Dirichlet data u0 > 0.  A
nonconstant candidate vanishes on the core |x| <= rho and is a radial
biharmonic function on rho <= |x| <= R, glued in C^1 fashion at rho.

The disk energies are evaluated in the variable t = -log(rho), in which the
denominators become incomplete-gamma / sinh expressions that stay accurate
as rho -> 1 (the textbook expressions lose all digits there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

from .core import (
    CONSTANT,
    DIRICHLET,
    FREE_BOUNDARY,
    NAVIER,
    TIE,
    DomainError,
    EnergyBreakdown,
    check_bc,
)

SQRT3 = math.sqrt(3.0)
# interval half-length at which the flat and constant minimisers tie
R_TIE_1D = SQRT3 + 1.0 / SQRT3

TIE_RTOL = 1e-9
RHO_MIN = 1e-9
RHO_MAX = 1.0 - 1e-9
RHO_GRID_POINTS = 2048
RHO_XTOL = 1e-8


# ---------------------------------------------------------------------------
# radial biharmonic basis
# ---------------------------------------------------------------------------

def _powers(n: int):
    return (4 - n, 2 - n, 2, 0)


def _check_radius(n: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    if np.any(r < 0) or (n > 1 and np.any(r == 0)):
        raise DomainError(f"radial basis for n={n} needs r > 0")
    return r


def radial_biharmonic_basis(n: int, r) -> np.ndarray:
    """Values of the four radial biharmonic basis functions at ``r``.

    Returns an array of shape ``(4,) + shape(r)``:

    * n = 2: (r^2 log r, log r, r^2, 1)
    * n = 4: (log r, r^-2, r^2, 1)
    * otherwise: (r^(4-n), r^(2-n), r^2, 1)
    """
    r = _check_radius(n, r)
    one = np.ones_like(r)
    if n == 2:
        lr = np.log(r)
        return np.array([r**2 * lr, lr, r**2, one])
    if n == 4:
        return np.array([np.log(r), r**-2.0, r**2, one])
    return np.array([r ** float(p) for p in _powers(n)[:3]] + [one])


def radial_basis_derivatives(n: int, r) -> tuple[np.ndarray, np.ndarray]:
    """First and second radial derivatives of the basis, each shaped like the basis."""
    r = _check_radius(n, r)
    zero = np.zeros_like(r)
    if n == 2:
        lr = np.log(r)
        d1 = np.array([2 * r * lr + r, 1 / r, 2 * r, zero])
        d2 = np.array([2 * lr + 3, -1 / r**2, 2 * np.ones_like(r), zero])
        return d1, d2
    if n == 4:
        d1 = np.array([1 / r, -2 * r**-3.0, 2 * r, zero])
        d2 = np.array([-1 / r**2, 6 * r**-4.0, 2 * np.ones_like(r), zero])
        return d1, d2
    d1, d2 = [], []
    for p in _powers(n)[:3]:
        d1.append(p * r ** float(p - 1) if p != 0 else zero)
        d2.append(p * (p - 1) * r ** float(p - 2) if p not in (0, 1) else zero)
    return np.array(d1 + [zero]), np.array(d2 + [zero])


def radial_basis_laplacian(n: int, r) -> np.ndarray:
    """Radial Laplacian f'' + (n-1)/r f' of each basis function."""
    d1, d2 = radial_basis_derivatives(n, r)
    if n == 1:
        return d2
    r = np.asarray(r, dtype=float)
    return d2 + (n - 1) / r * d1


# ---------------------------------------------------------------------------
# candidates and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialCandidate:
    """Piecewise radial function: 0 on |x| <= rho, basis combination on [rho, R]."""

    n: int
    rho: float
    R: float
    coeffs: tuple
    bc: str
    u0: float

    def _outer(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r > self.R * (1 + 1e-12)) or np.any(r < 0):
            raise DomainError(f"radius outside [0, {self.R}]")
        return r, r > self.rho

    def _combine(self, table, mask, r, const=0.0):
        out = np.zeros_like(r)
        if self.is_constant:
            out = out + const
        elif np.any(mask):
            c = np.asarray(self.coeffs, dtype=float)
            out[mask] = np.tensordot(c, table(r[mask]), axes=1)
        return out if out.ndim else float(out)

    def value(self, r):
        r, mask = self._outer(r)
        return self._combine(lambda s: radial_biharmonic_basis(self.n, s), mask, r, self.coeffs[3])

    def radial_derivative(self, r):
        r, mask = self._outer(r)
        return self._combine(lambda s: radial_basis_derivatives(self.n, s)[0], mask, r)

    def second_derivative(self, r):
        r, mask = self._outer(r)
        return self._combine(lambda s: radial_basis_derivatives(self.n, s)[1], mask, r)

    def laplacian(self, r):
        r, mask = self._outer(r)
        return self._combine(lambda s: radial_basis_laplacian(self.n, s), mask, r)

    def laplacian_outside(self, r):
        """Laplacian of the outer biharmonic branch, also for r <= rho (one-sided limits)."""
        c = np.asarray(self.coeffs, dtype=float)
        return np.tensordot(c, radial_basis_laplacian(self.n, np.asarray(r, dtype=float)), axes=1)

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.coeffs[:3])

    def residuals(self) -> dict:
        """Matching and boundary residuals; all vanish for a valid candidate."""
        c = np.asarray(self.coeffs, dtype=float)
        out = {}
        if not self.is_constant:
            b = radial_biharmonic_basis(self.n, self.rho)
            d1, _ = radial_basis_derivatives(self.n, self.rho)
            out["value_at_rho"] = float(c @ b)
            out["slope_at_rho"] = float(c @ d1)
        bR = radial_biharmonic_basis(self.n, self.R)
        out["value_at_R"] = float(c @ bR) - self.u0
        if self.bc == NAVIER:
            out["laplacian_at_R"] = float(c @ radial_basis_laplacian(self.n, self.R))
        else:
            out["slope_at_R"] = float(c @ radial_basis_derivatives(self.n, self.R)[0])
        return out

    def max_residual(self) -> float:
        return max(abs(v) for v in self.residuals().values())

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rho": self.rho,
            "R": self.R,
            "coeffs": [float(c) for c in self.coeffs],
            "bc": self.bc,
            "u0": self.u0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadialCandidate":
        coeffs = tuple(float(c) for c in d["coeffs"])
        if len(coeffs) != 4:
            raise DomainError("coeffs must have 4 entries")
        return cls(int(d["n"]), float(d["rho"]), float(d["R"]), coeffs,
                   check_bc(d["bc"]), float(d["u0"]))


def constant_candidate(n: int, R: float, u0: float, bc: str = NAVIER) -> RadialCandidate:
    return RadialCandidate(n, 0.0, R, (0.0, 0.0, 0.0, u0), bc, u0)


@dataclass(frozen=True)
class MinimiserReport:
    """Outcome of comparing the constant competitor with the best flat candidate.

    ``energy`` belongs to the reported minimiser; on a Tie it is the
    nonconstant candidate's energy and ``constant_energy`` holds the other.
    """

    decision: str
    energy: EnergyBreakdown
    constant_energy: EnergyBreakdown
    rho_opt: Optional[float] = None
    candidate: Optional[RadialCandidate] = None
    flat_energy: Optional[EnergyBreakdown] = field(default=None, compare=False)

    def __post_init__(self):
        if self.decision == CONSTANT and self.rho_opt is not None:
            raise DomainError("Constant decision carries no rho_opt")
        if self.decision in (FREE_BOUNDARY, TIE) and self.rho_opt is None:
            raise DomainError(f"{self.decision} decision needs rho_opt")

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "rho_opt": self.rho_opt,
            "energy": self.energy.to_dict(),
            "constant_energy": self.constant_energy.to_dict(),
            "flat_energy": None if self.flat_energy is None else self.flat_energy.to_dict(),
            "candidate": None if self.candidate is None else self.candidate.to_dict(),
        }


def _decide(flat: EnergyBreakdown, const: EnergyBreakdown, rho, candidate) -> MinimiserReport:
    tol = TIE_RTOL * const.total
    if abs(flat.total - const.total) <= tol:
        return MinimiserReport(TIE, flat, const, rho, candidate, flat)
    if flat.total < const.total:
        return MinimiserReport(FREE_BOUNDARY, flat, const, rho, candidate, flat)
    return MinimiserReport(CONSTANT, const, const, None, None, flat)


# ---------------------------------------------------------------------------
# the interval (-R, R), Navier data 1
# ---------------------------------------------------------------------------

def _check_1d(R, rho):
    if not R > 0:
        raise DomainError(f"R must be > 0, got {R}")
    if not 0 <= rho < R:
        raise DomainError(f"rho must lie in [0, R), got rho={rho}, R={R}")


def energy_1d_flat(R: float, rho: float) -> EnergyBreakdown:
    """Energy 2(R - rho) + 6/(R - rho)^3 of the flat-core candidate u_rho."""
    _check_1d(R, rho)
    s = R - rho
    return EnergyBreakdown(6.0 / s**3, 2.0 * s)


def eval_1d(R: float, rho: float, x):
    """u_rho(x) = (|x| - rho)^2 (3R - 2rho - |x|) / (2 (R - rho)^3) outside the core."""
    _check_1d(R, rho)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    if np.any(ax > R * (1 + 1e-15)):
        raise DomainError(f"|x| must be <= R={R}")
    s = R - rho
    out = (ax - rho) ** 2 * (3 * R - 2 * rho - ax) / (2 * s**3)
    out = np.where(ax <= rho, 0.0, out)
    return out if out.ndim else float(out)


def candidate_1d(R: float, rho: float) -> RadialCandidate:
    """u_rho written in the n = 1 basis (r^3, r, r^2, 1) with r = |x|."""
    _check_1d(R, rho)
    s3 = 2.0 * (R - rho) ** 3
    a = 3 * R - 2 * rho
    coeffs = (-1.0 / s3, -(2 * rho * a + rho**2) / s3, (a + 2 * rho) / s3, rho**2 * a / s3)
    return RadialCandidate(1, rho, R, coeffs, NAVIER, 1.0)


def minimiser_1d(R: float) -> MinimiserReport:
    """Minimiser of F on (-R, R) with Navier data 1: constant (energy 2R) or u_{R - sqrt 3}."""
    if not R > 0:
        raise DomainError(f"R must be > 0, got {R}")
    const = EnergyBreakdown(0.0, 2.0 * R)
    rho = R - SQRT3 if R > SQRT3 else 0.0
    flat = energy_1d_flat(R, rho)
    if rho == 0.0:
        # u_0 is not flat; the constant wins strictly
        return MinimiserReport(CONSTANT, const, const, None, None, flat)
    return _decide(flat, const, rho, candidate_1d(R, rho))


def flat_ratio_1d(R: float) -> float:
    """|{u_min = 0}| / |Omega| = 1 - sqrt(3)/R for R >= sqrt(3) + 1/sqrt(3)."""
    if R < R_TIE_1D * (1 - 1e-14):
        raise DomainError(f"no flat set for R < {R_TIE_1D}, got R={R}")
    return 1.0 - SQRT3 / R


# ---------------------------------------------------------------------------
# unit disk, n = 2
# ---------------------------------------------------------------------------

def _check_rho_open(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise DomainError("rho must lie in (0, 1)")
    return rho


def _check_u0(u0):
    if not u0 > 0:
        raise DomainError(f"u0 must be > 0, got {u0}")


def _check_lam(lam):
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")


def navier_denominator(rho):
    """2 rho^2 log rho - 2 rho^2 log^2 rho - rho^2 + 1, evaluated stably.

    With x = -2 log rho this is 1 - e^{-x}(1 + x + x^2/2), the regularised
    lower incomplete gamma function P(3, x).
    """
    rho = np.asarray(rho, dtype=float)
    den = special.gammainc(3.0, -2.0 * np.log(rho))
    if np.any(den <= 0):
        raise ArithmeticError("nonpositive Navier denominator")
    return den


def navier2d_coefficients(u0: float, rho: float) -> RadialCandidate:
    """Navier candidate on B_1 in R^2 with flat core of radius rho."""
    _check_u0(u0)
    _check_rho_open(rho)
    rho = float(rho)
    c1 = -u0 / float(navier_denominator(rho))
    t = -math.log(rho)
    c2 = rho**2 * (1.0 + 2.0 * t) * c1
    c3 = -c1
    return RadialCandidate(2, rho, 1.0, (c1, c2, c3, u0 - c3), NAVIER, u0)


def f_lambda(u0: float, rho, lam: float = 1.0):
    """Energy f_lambda(u0, rho) of the Navier candidate; rho = 0 gives the limit lambda pi + 8 pi u0^2.

    Scalar ``rho`` returns an EnergyBreakdown; an array returns the totals.
    """
    _check_u0(u0)
    _check_lam(lam)
    arr = np.asarray(rho, dtype=float)
    if np.any(arr < 0) or np.any(arr >= 1):
        raise DomainError("rho must lie in [0, 1)")
    safe = np.where(arr == 0, 0.5, arr)
    dirichlet = np.where(arr == 0, 8 * np.pi * u0**2, 8 * np.pi * u0**2 / navier_denominator(safe))
    measure = lam * np.pi * (1 - arr**2)
    if arr.ndim:
        return dirichlet + measure
    return EnergyBreakdown(float(dirichlet), float(measure), lam)


def _sinh_minus_id(t):
    """sinh(t) - t without cancellation for small t."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    series = t * t2 / 6 * (1 + t2 / 20 * (1 + t2 / 42 * (1 + t2 / 72 * (1 + t2 / 110))))
    return np.where(t < 0.1, series, np.sinh(t) - t)


def _one_minus_x_over_expm1(x):
    """1 - x / (e^x - 1) without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    series = x / 2 - x2 / 12 + x2 * x2 / 720 - x2**3 / 30240 + x2**4 / 1209600
    safe = np.where(x < 0.1, 1.0, x)
    return np.where(x < 0.1, series, 1 - safe / np.expm1(safe))


def _dirichlet_parts(u0, rho):
    """(C1, C2, C3, D) of the Dirichlet candidate, vectorised in rho."""
    rho = np.asarray(rho, dtype=float)
    t = -np.log(rho)
    e2 = rho**2
    om = -np.expm1(-2 * t)  # 1 - rho^2
    # 4 rho^2 log^2 rho - (1 - rho^2)^2 = -4 e^{-2t} (sinh t - t)(sinh t + t)
    den = -4 * e2 * _sinh_minus_id(t) * (np.sinh(t) + t)
    c1 = u0 * 2 * om / den
    c2 = c1 * 2 * t * e2 / om
    c3 = -u0 * (2 * t * e2 + om) / den
    d = 2 * _one_minus_x_over_expm1(2 * t)
    return c1, c2, c3, d


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _dirichlet_integral(rho, d):
    """int_rho^1 (4 log r + D)^2 r dr.

    Closed form for rho <= e^{-1/2}; for rho closer to 1 the closed form
    cancels catastrophically and a 24-point Gauss-Legendre rule in
    s = -log r (exact up to the e^{-2s} factor's series tail) is used.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    d = np.broadcast_to(d, rho.shape)
    out = np.empty_like(rho)
    t = -np.log(rho)
    far = t >= 0.5
    if np.any(far):
        r, L, D = rho[far], -t[far], d[far]
        i_log2 = -r**2 / 2 * L**2 + r**2 / 2 * L + (1 - r**2) / 4
        i_log = -r**2 / 2 * L - (1 - r**2) / 4
        out[far] = 16 * i_log2 + 8 * D * i_log + D**2 * (1 - r**2) / 2
    near = ~far
    if np.any(near):
        tt, D = t[near], d[near]
        s = 0.5 * (_GL_NODES[:, None] + 1) * tt[None, :]
        vals = (D[None, :] - 4 * s) ** 2 * np.exp(-2 * s)
        out[near] = 0.5 * tt * (_GL_WEIGHTS @ vals)
    return out


def dirichlet2d_coefficients(u0: float, rho: float) -> RadialCandidate:
    """Dirichlet candidate on B_1 in R^2: u(1) = u0, u'(1) = 0, u(rho) = u'(rho) = 0."""
    _check_u0(u0)
    _check_rho_open(rho)
    c1, c2, c3, _ = (float(v) for v in _dirichlet_parts(u0, float(rho)))
    return RadialCandidate(2, float(rho), 1.0, (c1, c2, c3, u0 - c3), DIRICHLET, u0)


def g_energy(u0: float, rho, lam: float = 1.0):
    """Energy g(u0, rho) of the Dirichlet candidate (measure weighted by ``lam``).

    Scalar ``rho`` returns an EnergyBreakdown; an array returns the totals.
    """
    _check_u0(u0)
    _check_lam(lam)
    arr = np.asarray(rho, dtype=float)
    _check_rho_open(arr)
    c1, _, _, d = _dirichlet_parts(u0, arr)
    dirichlet = 2 * np.pi * c1**2 * _dirichlet_integral(arr, d).reshape(arr.shape)
    measure = lam * np.pi * (1 - arr**2)
    if arr.ndim:
        return dirichlet + measure
    return EnergyBreakdown(float(dirichlet), float(measure), lam)


# ---------------------------------------------------------------------------
# rho search
# ---------------------------------------------------------------------------

def search_rho(totals: Callable[[np.ndarray], np.ndarray], points: int = RHO_GRID_POINTS,
               xtol: float = RHO_XTOL) -> tuple[float, float]:
    """Minimise a vectorised energy curve over [RHO_MIN, RHO_MAX].

    A dense grid locates the best sample (no unimodality assumed); golden
    section then refines inside the bracketing triple.
    """
    grid = np.linspace(RHO_MIN, RHO_MAX, points)
    vals = totals(grid)
    i = int(np.argmin(vals))
    best_rho, best_val = float(grid[i]), float(vals[i])
    if 0 < i < points - 1:
        scalar = lambda x: float(totals(np.array([x]))[0])
        try:
            res = optimize.minimize_scalar(
                scalar, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                method="golden", options={"xtol": xtol},
            )
        except ValueError:
            return best_rho, best_val
        if grid[i - 1] <= res.x <= grid[i + 1] and res.fun <= best_val:
            best_rho, best_val = float(res.x), float(res.fun)
    return best_rho, best_val


def infimum_navier2d(u0: float, lam: float = 1.0, points: int = RHO_GRID_POINTS) -> MinimiserReport:
    """min{lambda pi, inf_rho f_lambda(u0, rho)} on the unit disk."""
    _check_u0(u0)
    _check_lam(lam)
    rho, _ = search_rho(lambda r: f_lambda(u0, r, lam), points)
    const = EnergyBreakdown(0.0, lam * math.pi, lam)
    flat = f_lambda(u0, rho, lam)
    return _decide(flat, const, rho, navier2d_coefficients(u0, rho))


def infimum_dirichlet2d(u0: float, lam: float = 1.0, points: int = RHO_GRID_POINTS) -> MinimiserReport:
    """min{lambda pi, inf_rho g_lambda(u0, rho)} on the unit disk."""
    _check_u0(u0)
    _check_lam(lam)
    rho, _ = search_rho(lambda r: g_energy(u0, r, lam), points)
    const = EnergyBreakdown(0.0, lam * math.pi, lam)
    flat = g_energy(u0, rho, lam)
    return _decide(flat, const, rho, dirichlet2d_coefficients(u0, rho))


def _rescale_candidate(c: RadialCandidate, R: float) -> RadialCandidate:
    """Candidate v on B_1 turned into u(r) = v(r/R) on B_R (n = 2 basis)."""
    c1, c2, c3, c4 = c.coeffs
    lr = math.log(R)
    coeffs = (c1 / R**2, c2, (c3 - c1 * lr) / R**2, c4 - c2 * lr)
    return RadialCandidate(2, c.rho * R, R, coeffs, c.bc, c.u0)


def rescale_to_ball(R: float, u0: float, bc: str = NAVIER) -> MinimiserReport:
    """Radial infimum of F on B_R in R^2: R^{-2} min{R^4 pi, inf_rho f_{R^4}(u0, rho)}.

    ``rho_opt`` and the candidate are returned in physical units on B_R.
    """
    if not R > 0:
        raise DomainError(f"R must be > 0, got {R}")
    bc = check_bc(bc)
    lam = R**4
    unit = infimum_navier2d(u0, lam) if bc == NAVIER else infimum_dirichlet2d(u0, lam)
    scale = R**-2.0

    def back(e: Optional[EnergyBreakdown]):
        return None if e is None else EnergyBreakdown(e.dirichlet_part * scale, e.measure_part * scale, 1.0)

    rho = None if unit.rho_opt is None else unit.rho_opt * R
    cand = None if unit.candidate is None else _rescale_candidate(unit.candidate, R)
    return MinimiserReport(unit.decision, back(unit.energy), back(unit.constant_energy),
                           rho, cand, back(unit.flat_energy))


def candidate_energy(c: RadialCandidate, lam: float = 1.0) -> EnergyBreakdown:
    """Energy of an arbitrary candidate by adaptive quadrature of its Laplacian."""
    from scipy import integrate

    from .core import unit_ball_volume

    n = c.n
    area = n * unit_ball_volume(n)  # surface measure of the unit sphere
    if c.is_constant:
        dirichlet = 0.0
        lo = 0.0
    else:
        lo = c.rho
        f = lambda r: float(c.laplacian_outside(r)) ** 2 * area * r ** (n - 1)
        dirichlet, _ = integrate.quad(f, c.rho, c.R, epsabs=1e-13, epsrel=1e-12, limit=200)
    ev = unit_ball_volume(n)
    return EnergyBreakdown(dirichlet, lam * ev * (c.R**n - lo**n), lam)
