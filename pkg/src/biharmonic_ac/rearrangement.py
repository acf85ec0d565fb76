"""Annular symmetric decreasing rearrangement of cell functions.

A nonnegative function on B_1 minus a hole C is stored as (value, measure)
cells.  Its rearrangement f* lives on the annulus r0 < |x| < 1 with
|C| = e_n r0^n: the cells are sorted by decreasing value and packed into
consecutive spherical shells starting at r0, each shell having exactly the
measure of its cell.  Since that is a permutation of (value, measure) pairs,
every distribution-function identity holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DomainError, unit_ball_volume

MEASURE_RTOL = 1e-10


@dataclass(frozen=True)
class MeasuredFunction:
    """Nonnegative cell function on B_1(0) minus a hole of measure ``hole_measure``."""

    values: np.ndarray
    measures: np.ndarray
    hole_measure: float
    n: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.measures, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "measures", m)
        if v.shape != m.shape or v.ndim != 1 or v.size == 0:
            raise DomainError("values and measures must be nonempty 1-d arrays of equal length")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise DomainError("cell values must be finite and >= 0")
        if np.any(~(m > 0)):
            raise DomainError("cell measures must be > 0")
        en = self.ambient_measure
        if not 0 <= self.hole_measure < en:
            raise DomainError(f"hole_measure must lie in [0, {en}), got {self.hole_measure}")
        total = math.fsum(m) + self.hole_measure
        if abs(total - en) > MEASURE_RTOL * en:
            raise DomainError(f"cell measures plus hole sum to {total}, expected {en}")

    @property
    def ambient_measure(self) -> float:
        return unit_ball_volume(self.n)

    @property
    def r0(self) -> float:
        return (self.hole_measure / self.ambient_measure) ** (1.0 / self.n)

    def integral(self, p: float = 1.0) -> float:
        return math.fsum(self.values**p * self.measures)

    @classmethod
    def from_cells(cls, cells, hole_measure: float, n: int) -> "MeasuredFunction":
        arr = np.asarray(cells, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], hole_measure, n)


@dataclass(frozen=True)
class ShellProfile:
    """Piecewise-constant radial profile: ``values[k]`` on edges[k] < |x| < edges[k+1]."""

    edges: np.ndarray
    values: np.ndarray
    measures: np.ndarray
    n: int

    @property
    def r0(self) -> float:
        return float(self.edges[0])

    def integral(self, p: float = 1.0) -> float:
        return math.fsum(self.values**p * self.measures)

    def __call__(self, r):
        """Evaluate at radii (right-continuous at shell edges)."""
        r = np.asarray(r, dtype=float)
        k = np.searchsorted(self.edges, r, side="right") - 1
        k = np.clip(k, 0, self.values.size - 1)
        return self.values[k]


@dataclass(frozen=True)
class RadialProfile:
    """Nodal radial profile ``values[i] = w(r[i])``."""

    r: np.ndarray
    values: np.ndarray
    n: int

    def at(self, r):
        return np.interp(r, self.r, self.values)


def distribution(f: MeasuredFunction, t: float) -> float:
    """|{f > t}|."""
    if t < 0:
        raise DomainError(f"level must be >= 0, got {t}")
    return math.fsum(f.measures[f.values > t])


def annular_rearrange(f: MeasuredFunction) -> ShellProfile:
    """Discrete annular symmetric decreasing rearrangement f*.

    Ties keep their input order (stable sort).  With no hole this is the
    classical rearrangement onto a ball centred at 0.
    """
    order = np.argsort(-f.values, kind="stable")
    vals = f.values[order]
    meas = f.measures[order]
    en = f.ambient_measure
    cum = np.concatenate([[0.0], np.cumsum(meas)])
    edges = (cum / en + f.r0**f.n) ** (1.0 / f.n)
    edges[0] = f.r0
    # closing the last shell at |x| = 1 absorbs the summation round-off
    if abs(edges[-1] - 1.0) <= 1e-9:
        edges[-1] = 1.0
    return ShellProfile(edges, vals, meas, f.n)


def profile_distribution(p: ShellProfile, t: float) -> float:
    return math.fsum(p.measures[p.values > t])


def equimeasurability_defect(f: MeasuredFunction, fstar: Optional[ShellProfile] = None) -> float:
    """max over the distinct levels t of | |{f > t}| - |{f* > t}| |."""
    fstar = annular_rearrange(f) if fstar is None else fstar
    levels = np.unique(np.concatenate([[0.0], f.values]))
    return max(abs(distribution(f, t) - profile_distribution(fstar, t)) for t in levels)


def check_lp_preservation(f: MeasuredFunction, p: float = 2.0) -> float:
    """Relative defect | ||f||_p^p - ||f*||_p^p | / ||f||_p^p (0 for f = 0)."""
    fstar = annular_rearrange(f)
    a, b = f.integral(p), fstar.integral(p)
    return abs(a - b) / a if a > 0 else abs(b)


def check_l2_preservation(f: MeasuredFunction) -> float:
    return check_lp_preservation(f, 2.0)


def _volume_coordinates(p: ShellProfile) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(p.measures)])


def product_integral(p: ShellProfile, q: ShellProfile) -> float:
    """int f* g* over the annulus for two profiles sharing r0.

    Both profiles are step functions of the enclosed volume, so the
    integral is exact over the merged breakpoints.
    """
    if p.n != q.n or not math.isclose(p.r0, q.r0, rel_tol=0, abs_tol=1e-14):
        raise DomainError("profiles live on different annuli")
    vp, vq = _volume_coordinates(p), _volume_coordinates(q)
    cuts = np.union1d(vp, vq)
    cuts = cuts[cuts <= min(vp[-1], vq[-1])]
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    ip = np.clip(np.searchsorted(vp, mids, side="right") - 1, 0, p.values.size - 1)
    iq = np.clip(np.searchsorted(vq, mids, side="right") - 1, 0, q.values.size - 1)
    return math.fsum(p.values[ip] * q.values[iq] * np.diff(cuts))


def hardy_littlewood(f: MeasuredFunction, g: MeasuredFunction) -> tuple[float, float]:
    """(int f g, int f* g*); the first never exceeds the second."""
    if (f.n != g.n or f.hole_measure != g.hole_measure
            or f.measures.shape != g.measures.shape or np.any(f.measures != g.measures)):
        raise DomainError("f and g must share the cell partition and the hole")
    lhs = math.fsum(f.values * g.values * f.measures)
    rhs = product_integral(annular_rearrange(f), annular_rearrange(g))
    return lhs, rhs


def _shell_primitive(n: int, a: float, r: np.ndarray) -> np.ndarray:
    """int_a^r s^(1-n) ds."""
    if n == 1:
        return r - a
    if n == 2:
        return np.log(r / a)
    return (r ** (2 - n) - a ** (2 - n)) / (2 - n)


def talenti_w(fstar: ShellProfile, r_eval=None) -> RadialProfile:
    """Radial solution of w'' + (n-1)/r w' = f~ on (r0, 1] with w(r0) = w'(r0) = 0.

    w(r) = int_{r0}^r s^(1-n) int_{r0}^s sigma^(n-1) f~(sigma) dsigma ds is
    integrated exactly shell by shell (f~ is constant on each shell).  The
    profile is evaluated at the shell edges, or at ``r_eval``; w = 0 below r0.
    """
    if np.any(fstar.values < 0):
        raise DomainError("rearranged profile must be nonnegative")
    n = fstar.n
    edges, c = fstar.edges, fstar.values
    # flux[k] = int_{r0}^{edges[k]} s^(n-1) f~ ds,  w_edge[k] = w(edges[k])
    flux = np.zeros(edges.size)
    w_edge = np.zeros(edges.size)
    for k in range(c.size):
        a, b = edges[k], edges[k + 1]
        flux[k + 1] = flux[k] + c[k] * (b**n - a**n) / n
        w_edge[k + 1] = w_edge[k] + _w_increment(n, a, np.array([b]), flux[k], c[k])[0]
    if r_eval is None:
        return RadialProfile(edges.copy(), w_edge, n)
    r = np.asarray(r_eval, dtype=float)
    out = np.zeros_like(r)
    inside = r > edges[0]
    k = np.clip(np.searchsorted(edges, r[inside], side="right") - 1, 0, c.size - 1)
    rr = np.minimum(r[inside], edges[-1])
    for kk in np.unique(k):
        sel = k == kk
        out_idx = np.flatnonzero(inside)[sel]
        out[out_idx] = w_edge[kk] + _w_increment(n, edges[kk], rr[sel], flux[kk], c[kk])
    return RadialProfile(r, out, n)


def _w_increment(n, a, r, flux_a, c):
    """w(r) - w(a) for r in a shell [a, b] with constant density c."""
    # s^(1-n) * (flux_a + c (s^n - a^n)/n) = (flux_a - c a^n / n) s^(1-n) + c s / n
    coef = flux_a - c * a**n / n
    term = coef * _shell_primitive(n, a, r) if coef != 0.0 else 0.0
    return term + c * (r**2 - a**2) / (2 * n)


@dataclass(frozen=True)
class CertificateReport:
    """Comparison u0 <= w(1) for a discrete Navier minimiser on the unit ball."""

    status: str  # "pass", "fail" or "n/a"
    u0: float
    w1: float
    r0: float
    flat_measure: float
    tolerance: float

    @property
    def gap(self) -> float:
        return self.w1 - self.u0

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "u0": self.u0,
            "w1": self.w1,
            "gap": self.gap,
            "r0": self.r0,
            "flat_measure": self.flat_measure,
            "tolerance": self.tolerance,
        }


CERTIFICATE_FLAT_RTOL = 1e-8


def certificate_from_cells(laplacian_abs, measures, flat_mask, u0, n, tolerance=0.0) -> CertificateReport:
    """Certificate from |Lap u| sampled on cells of B_1(0) with a known flat set."""
    lap = np.abs(np.asarray(laplacian_abs, dtype=float))
    measures = np.asarray(measures, dtype=float)
    flat_mask = np.asarray(flat_mask, dtype=bool)
    en = unit_ball_volume(n)
    # rescale so the cells tile B_1 exactly; removes the quadrature round-off
    measures = measures * (en / math.fsum(measures))
    flat_measure = math.fsum(measures[flat_mask])
    f = MeasuredFunction(lap[~flat_mask], measures[~flat_mask], flat_measure, n)
    w = talenti_w(annular_rearrange(f))
    w1 = float(w.values[-1])
    if flat_measure == 0.0:
        status = "n/a"
    else:
        status = "pass" if u0 <= w1 + tolerance else "fail"
    return CertificateReport(status, u0, w1, float(f.r0), float(flat_measure), tolerance)


CERTIFICATE_TOL_FACTOR = 10.0


def symmetry_certificate(u, u0: float, laplacian=None, tolerance: Optional[float] = None,
                         flat_rtol: float = CERTIFICATE_FLAT_RTOL) -> CertificateReport:
    """Talenti comparison u0 <= w(1) for a radial grid function on the unit ball.

    |Lap u| on the non-flat cells is rearranged onto the annulus outside a
    hole of the flat-set measure and w(1) is computed from it.  When the flat
    set is a core {r < rho}, rho is reconstructed inside its boundary cell
    from u ~ Lap u (r - rho)^2 / 2 (u and u' vanish at rho), and the
    Laplacian value of the first non-flat node, whose stencil straddles the
    kink, is extrapolated from its two outer neighbours.  ``laplacian``
    overrides the nodal Laplacian (e.g. exact values of a closed form).
    The default tolerance is 10 h u0.
    """
    from .minimiser import RadialDisk, discrete_laplacian

    g = u.geometry
    if not isinstance(g, RadialDisk) or abs(g.R - 1.0) > 1e-12:
        raise DomainError("symmetry certificate needs a radial grid on the unit ball")
    if not u0 > 0:
        raise DomainError(f"u0 must be > 0, got {u0}")
    n, h, r = g.n, g.h, g.nodes
    en = unit_ball_volume(n)
    extrapolate = laplacian is None
    lap = np.abs(discrete_laplacian(u) if laplacian is None else np.asarray(laplacian, dtype=float))
    if lap.shape != (g.m,):
        raise DomainError(f"laplacian must have {g.m} entries")
    tol = CERTIFICATE_TOL_FACTOR * h * u0 if tolerance is None else tolerance
    flat = np.abs(u.values) < flat_rtol * u0
    lo = np.maximum(r - h / 2, 0.0)
    hi = np.minimum(r + h / 2, 1.0)

    k = int(np.argmin(flat)) if not flat.all() else g.m
    core = flat[0] and k < g.m - 2 and not flat[k:].any()
    if not core:
        return certificate_from_cells(lap, en * (hi**n - lo**n), flat, u0, n, tol)

    lap = lap.copy()
    if extrapolate:
        lap[k] = max(2 * lap[k + 1] - lap[k + 2], 0.0)
    rho = r[k]
    if lap[k] > 0:
        rho = r[k] - math.sqrt(2 * abs(u.values[k]) / lap[k])
    rho = min(max(rho, r[k - 1]), r[k])
    lo[k] = rho
    meas = en * (hi[k:] ** n - lo[k:] ** n)
    hole = en * rho**n
    meas = meas * ((en - hole) / math.fsum(meas))
    f = MeasuredFunction(lap[k:], meas, hole, n)
    w1 = float(talenti_w(annular_rearrange(f)).values[-1])
    status = "pass" if u0 <= w1 + tol else "fail"
    return CertificateReport(status, u0, w1, float(f.r0), float(hole), tol)
