"""Discrete penalised minimisation of F_lambda on intervals and radial grids.

The indicator 1_{u != 0} is replaced by chi_eps(u) = u^2 / (u^2 + eps^2) and
eps is driven down along a continuation schedule.  Each stage is a descent
method with Armijo backtracking whose direction is the gradient
preconditioned by the (SPD, banded) matrix 2 L^T W L + diag(convex part of
the penalty curvature).  Without that metric a plain gradient step would be
limited by the h^-4 stiffness of the discrete bilaplacian.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import linalg, sparse

from .core import DIRICHLET, NAVIER, DomainError, EnergyBreakdown, check_bc, unit_ball_volume

logger = logging.getLogger(__name__)

MIN_NODES = 4


# ---------------------------------------------------------------------------
# geometry and grid functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Uniform grid of ``m`` nodes on [-R, R]."""

    R: float
    m: int

    def __post_init__(self):
        _check_geometry(self.R, self.m)

    n = 1

    @property
    def h(self) -> float:
        return 2 * self.R / (self.m - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.m)

    @property
    def radii(self) -> np.ndarray:
        return np.abs(self.nodes)

    @property
    def boundary(self) -> tuple:
        return (0, self.m - 1)

    @property
    def measure(self) -> float:
        return 2 * self.R

    @functools.cached_property
    def cell_volumes(self) -> np.ndarray:
        w = np.full(self.m, self.h)
        w[[0, -1]] = self.h / 2
        return w

    def to_dict(self) -> dict:
        return {"kind": "interval", "R": self.R, "m": self.m}


@dataclass(frozen=True)
class RadialDisk:
    """Uniform radial grid of ``m`` nodes on [0, R] for radial functions on B_R in R^n."""

    n: int
    R: float
    m: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"dimension must be >= 1, got {self.n}")
        _check_geometry(self.R, self.m)

    @property
    def h(self) -> float:
        return self.R / (self.m - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.m)

    @property
    def radii(self) -> np.ndarray:
        return self.nodes

    @property
    def boundary(self) -> tuple:
        return (self.m - 1,)

    @property
    def measure(self) -> float:
        return unit_ball_volume(self.n) * self.R**self.n

    @functools.cached_property
    def cell_volumes(self) -> np.ndarray:
        # dual shells [r - h/2, r + h/2] clipped to [0, R]; they tile B_R exactly
        r, h = self.nodes, self.h
        hi = np.minimum(r + h / 2, self.R)
        lo = np.maximum(r - h / 2, 0.0)
        return unit_ball_volume(self.n) * (hi**self.n - lo**self.n)

    def to_dict(self) -> dict:
        return {"kind": "radial", "n": self.n, "R": self.R, "m": self.m}


Geometry = Union[Interval, RadialDisk]


def _check_geometry(R, m):
    if not R > 0:
        raise DomainError(f"R must be > 0, got {R}")
    if int(m) != m or m < MIN_NODES:
        raise DomainError(f"need an integer node count m >= {MIN_NODES}, got {m}")


def geometry_from_dict(d: dict) -> Geometry:
    kind = d.get("kind")
    if kind == "interval":
        return Interval(float(d["R"]), int(d["m"]))
    if kind == "radial":
        return RadialDisk(int(d["n"]), float(d["R"]), int(d["m"]))
    raise DomainError(f"unknown geometry kind {kind!r}")


@dataclass(frozen=True)
class GridFunction:
    """Nodal values on a geometry, with boundary data ``u0`` of the given kind."""

    geometry: Geometry
    values: np.ndarray
    bc: str
    u0: float
    ghosts: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.geometry.m,):
            raise DomainError(f"expected {self.geometry.m} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bc", check_bc(self.bc))

    @property
    def h(self) -> float:
        return self.geometry.h

    def with_values(self, values) -> "GridFunction":
        return replace(self, values=np.asarray(values, dtype=float), ghosts=())

    @classmethod
    def constant(cls, geometry: Geometry, bc: str, u0: float) -> "GridFunction":
        return cls(geometry, np.full(geometry.m, float(u0)), bc, u0)

    @classmethod
    def sample(cls, geometry: Geometry, bc: str, u0: float, func) -> "GridFunction":
        """Values func(|x|) at the nodes (radius for disks, |x| for intervals)."""
        return cls(geometry, np.asarray(func(geometry.radii), dtype=float), bc, u0)


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def laplacian_matrix(geometry: Geometry, bc: str) -> sparse.csr_matrix:
    """Sparse discrete Laplacian with the boundary closure of ``bc`` folded in.

    Navier boundary rows vanish (linear ghost extrapolation); Dirichlet rows
    use the mirror ghost that makes the centred slope zero.
    """
    bc = check_bc(bc)
    m, h = geometry.m, geometry.h
    rows, cols, vals = [], [], []

    def put(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    idx = np.arange(1, m - 1)
    if isinstance(geometry, Interval):
        lo = hi = np.full(idx.size, 1 / h**2)
    else:
        r = geometry.nodes[idx]
        adv = (geometry.n - 1) / (2 * h * r)
        lo, hi = 1 / h**2 - adv, 1 / h**2 + adv
    rows += list(idx) * 3
    cols += list(idx - 1) + list(idx) + list(idx + 1)
    vals += list(lo) + [-2 / h**2] * idx.size + list(hi)

    if isinstance(geometry, Interval):
        if bc == DIRICHLET:
            put(0, 0, -2 / h**2)
            put(0, 1, 2 / h**2)
            put(m - 1, m - 1, -2 / h**2)
            put(m - 1, m - 2, 2 / h**2)
    else:
        n = geometry.n
        put(0, 0, -2 * n / h**2)
        put(0, 1, 2 * n / h**2)
        if bc == DIRICHLET:
            put(m - 1, m - 1, -2 / h**2)
            put(m - 1, m - 2, 2 / h**2)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


def discrete_laplacian(u: GridFunction) -> np.ndarray:
    """Second-order Laplacian at every node (3-point stencil, radial form on disks)."""
    return laplacian_matrix(u.geometry, u.bc) @ u.values


def _ghost_values(u: GridFunction) -> tuple:
    g, v, h = u.geometry, u.values, u.geometry.h
    if isinstance(g, Interval):
        if u.bc == NAVIER:
            return (2 * v[0] - v[1], 2 * v[-1] - v[-2])
        return (v[1], v[-2])
    if u.bc == DIRICHLET:
        return (v[-2],)
    # radial Navier: ghost that makes the radial stencil vanish at r = R
    adv = (g.n - 1) / (2 * h * g.R)
    return (((2 * v[-1] - v[-2]) / h**2 + adv * v[-2]) / (1 / h**2 + adv),)


def enforce_boundary(u: GridFunction) -> GridFunction:
    """Pin boundary nodes to u0 and record the ghost values implied by ``bc``."""
    v = u.values.copy()
    v[list(u.geometry.boundary)] = u.u0
    out = replace(u, values=v, ghosts=())
    return replace(out, ghosts=_ghost_values(out))


def boundary_laplacian_from_ghosts(u: GridFunction) -> np.ndarray:
    """Laplacian at the boundary node(s) computed from the stored ghost values."""
    g, v, h = u.geometry, u.values, u.geometry.h
    if not u.ghosts:
        raise DomainError("grid function carries no ghost values; call enforce_boundary")
    if isinstance(g, Interval):
        left = (u.ghosts[0] - 2 * v[0] + v[1]) / h**2
        right = (u.ghosts[1] - 2 * v[-1] + v[-2]) / h**2
        return np.array([left, right])
    gh = u.ghosts[0]
    lap = (gh - 2 * v[-1] + v[-2]) / h**2 + (g.n - 1) / g.R * (gh - v[-2]) / (2 * h)
    return np.array([lap])


def chi(u, eps):
    u2 = np.square(u)
    return u2 / (u2 + eps**2)


def chi_prime(u, eps):
    return 2 * u * eps**2 / (np.square(u) + eps**2) ** 2


def chi_second(u, eps):
    u2 = np.square(u)
    return 2 * eps**2 * (eps**2 - 3 * u2) / (u2 + eps**2) ** 3


def discrete_energy(u: GridFunction, lam: float, eps: float) -> EnergyBreakdown:
    """Smoothed energy: sum (Lap_h u)^2 vol + lam * sum chi_eps(u) vol."""
    if not eps > 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    w = u.geometry.cell_volumes
    lap = discrete_laplacian(u)
    return EnergyBreakdown(math.fsum(w * lap**2), lam * math.fsum(w * chi(u.values, eps)), lam)


def sharp_energy(u: GridFunction, lam: float, threshold: float) -> EnergyBreakdown:
    """Energy with the exact indicator of {|u| >= threshold}."""
    w = u.geometry.cell_volumes
    lap = discrete_laplacian(u)
    support = np.abs(u.values) >= threshold
    return EnergyBreakdown(math.fsum(w * lap**2), lam * math.fsum(w[support]), lam)


def penalised_gradient(u: GridFunction, lam: float, eps: float) -> np.ndarray:
    """Gradient of the smoothed energy in the nodal values (all nodes, boundary included)."""
    L = laplacian_matrix(u.geometry, u.bc)
    w = u.geometry.cell_volumes
    return 2 * (L.T @ (w * (L @ u.values))) + lam * w * chi_prime(u.values, eps)


def extract_flat_set(u: GridFunction, threshold: float) -> tuple[float, Optional[float]]:
    """(|{|u| < threshold}|, radius of the flat core around the centre or None).

    The radius is taken at the outer edge of the last flat dual cell, so for a
    disk it is consistent with the measure of a flat core.
    """
    if not threshold > 0:
        raise DomainError(f"threshold must be > 0, got {threshold}")
    g = u.geometry
    flat = np.abs(u.values) < threshold
    measure = math.fsum(g.cell_volumes[flat])
    r = g.radii
    order = np.argsort(r, kind="stable")
    flat_sorted = flat[order]
    if not flat_sorted[0]:
        return measure, None
    # nodes flat from the centre outward until the first non-flat one
    stop = np.argmin(flat_sorted) if not flat_sorted.all() else flat_sorted.size
    rmax = float(r[order][stop - 1])
    return measure, min(rmax + g.h / 2, g.R)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltySchedule:
    """Continuation in eps.

    ``epsilons`` are relative to u0.  A stage stops once the preconditioned
    gradient norm g . H^-1 g (the Newton decrement) drops below
    ``inner_tol`` times the current energy; the raw sup norm of the gradient
    is useless here because its round-off floor grows like h^-4.
    """

    epsilons: tuple = tuple(10.0 ** (-k / 2) for k in range(2, 17))
    inner_tol: float = 1e-12
    max_inner_iters: int = 1000

    def __post_init__(self):
        e = np.asarray(self.epsilons, dtype=float)
        if e.size == 0 or np.any(e <= 0) or np.any(np.diff(e) >= 0):
            raise DomainError("epsilons must be a strictly decreasing positive sequence")
        if e[-1] < 1e-8 * (1 - 1e-12):
            raise DomainError(f"eps floor must be >= 1e-8, got {e[-1]}")
        if not self.inner_tol > 0 or self.max_inner_iters < 1:
            raise DomainError("inner_tol must be > 0 and max_inner_iters >= 1")
        object.__setattr__(self, "epsilons", tuple(float(v) for v in e))

    @property
    def floor(self) -> float:
        return self.epsilons[-1]


FLAT_FACTOR = 10.0


@dataclass
class SolveResult:
    """Outcome of a penalised solve.

    ``energy`` is the smoothed energy at the final eps (the quantity actually
    minimised); ``sharp`` uses the exact indicator of {|u| >= threshold}.
    ``history`` holds one list of accepted energies per eps stage.
    """

    u: GridFunction
    energy: EnergyBreakdown
    sharp: EnergyBreakdown
    flat_measure: float
    flat_radius_estimate: Optional[float]
    converged: bool
    iterations: int
    threshold: float
    eps: float
    start: str
    history: list = field(default_factory=list, repr=False)

    def to_dict(self, include_values: bool = False) -> dict:
        d = {
            "geometry": self.u.geometry.to_dict(),
            "bc": self.u.bc,
            "u0": self.u.u0,
            "energy": self.energy.to_dict(),
            "sharp_energy": self.sharp.to_dict(),
            "flat_measure": self.flat_measure,
            "flat_radius_estimate": self.flat_radius_estimate,
            "converged": self.converged,
            "iterations": self.iterations,
            "flat_threshold": self.threshold,
            "eps_floor": self.eps,
            "start": self.start,
        }
        if include_values:
            d["nodes"] = self.u.geometry.nodes.tolist()
            d["values"] = self.u.values.tolist()
        return d


def _free_nodes(g: Geometry) -> np.ndarray:
    return np.setdiff1d(np.arange(g.m), g.boundary)


@functools.lru_cache(maxsize=32)
def _stiffness_banded(g: Geometry, bc: str) -> np.ndarray:
    """2 L_f^T W L_f over the free nodes in upper banded storage (it is pentadiagonal)."""
    L = laplacian_matrix(g, bc)
    Lf = L[:, _free_nodes(g)]
    A = (2 * (Lf.T @ sparse.diags(g.cell_volumes) @ Lf)).tocsr()
    ab = np.zeros((3, A.shape[0]))
    for k in range(3):
        ab[2 - k, k:] = A.diagonal(k)
    return ab


class _Stage:
    """Smoothed energy at fixed eps restricted to the free (non-boundary) nodes."""

    def __init__(self, template: GridFunction, lam: float, eps: float):
        g = template.geometry
        self.template = template
        self.lam, self.eps = lam, eps
        self.w = g.cell_volumes
        self.L = laplacian_matrix(g, template.bc)
        self.free = _free_nodes(g)
        self.wf = self.w[self.free]
        self.ab = _stiffness_banded(g, template.bc)

    def full(self, x):
        v = self.template.values.copy()
        v[self.free] = x
        return v

    def energy(self, x) -> float:
        v = self.full(x)
        lap = self.L @ v
        return float(np.dot(self.w, lap**2) + self.lam * np.dot(self.w, chi(v, self.eps)))

    def gradient(self, x) -> np.ndarray:
        v = self.full(x)
        g = 2 * (self.L.T @ (self.w * (self.L @ v))) + self.lam * self.w * chi_prime(v, self.eps)
        return g[self.free]

    def direction(self, x, grad) -> np.ndarray:
        # metric: bilaplacian stiffness plus the convex part of the penalty curvature
        ab = self.ab.copy()
        ab[2] += self.lam * self.wf * np.maximum(chi_second(x, self.eps), 0.0)
        return -linalg.solveh_banded(ab, grad)


ARMIJO_C = 1e-4


def _run_stage(stage: _Stage, x, schedule: PenaltySchedule):
    """Armijo descent at one eps; returns (x, converged, iterations, accepted energies)."""
    E = stage.energy(x)
    energies = [E]
    for it in range(schedule.max_inner_iters + 1):
        grad = stage.gradient(x)
        d = stage.direction(x, grad)
        decrement = -float(grad @ d)
        if decrement <= schedule.inner_tol * max(E, np.finfo(float).tiny):
            return x, True, it, energies
        if it == schedule.max_inner_iters:
            break
        t = 1.0
        while True:
            trial = x + t * d
            Et = stage.energy(trial)
            if Et <= E - ARMIJO_C * t * decrement:
                break
            t *= 0.5
            if t < 1e-16:
                # no representable decrease along d: round-off floor reached
                logger.debug("line search stalled at eps=%.1e, decrement %.2e", stage.eps, decrement)
                return x, decrement <= 1e-8 * E, it, energies
        x, E = trial, Et
        energies.append(E)
    return x, False, schedule.max_inner_iters, energies


def _descend(start: GridFunction, lam: float, schedule: PenaltySchedule, epsilons):
    u = enforce_boundary(start)
    x = u.values[_free_nodes(u.geometry)]
    history: list = []
    converged, iters = True, 0
    for rel in epsilons:
        stage = _Stage(u, lam, rel * u.u0)
        x, ok, k, energies = _run_stage(stage, x, schedule)
        iters += k
        converged = converged and ok
        history.append(energies)
        logger.debug("eps=%.1e iters=%d converged=%s E=%.12g", stage.eps, k, ok, energies[-1])
    return u.with_values(stage.full(x)), converged, iters, history


def minimise_penalised(geometry: Geometry, bc: str, u0: float, lam: float = 1.0,
                       schedule: Optional[PenaltySchedule] = None,
                       seed: Optional[GridFunction] = None,
                       use_closed_form_seed: bool = True) -> SolveResult:
    """Minimise the discrete F_lambda by penalty continuation.

    Runs from the constant u0 and, where a nonconstant closed-form radial
    minimiser is known (or ``seed`` is given), from that candidate as well;
    the run with the lower final energy is returned.
    """
    bc = check_bc(bc)
    if not u0 > 0:
        raise DomainError(f"u0 must be > 0, got {u0}")
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    schedule = schedule or PenaltySchedule()
    threshold = FLAT_FACTOR * schedule.floor * u0
    eps = schedule.floor * u0

    starts = [("constant", GridFunction.constant(geometry, bc, u0), schedule.epsilons)]
    if seed is None and use_closed_form_seed:
        seed = closed_form_seed(geometry, bc, u0, lam)
    if seed is not None:
        # the seed already sits in its basin; only the final stage is needed
        starts.append(("closed_form", seed, schedule.epsilons[-1:]))

    best = None
    for label, start, epsilons in starts:
        u, ok, iters, hist = _descend(start, lam, schedule, epsilons)
        energy = discrete_energy(u, lam, eps)
        if best is None or energy.total < best.energy.total:
            flat_measure, radius = extract_flat_set(u, threshold)
            best = SolveResult(u, energy, sharp_energy(u, lam, threshold), flat_measure, radius,
                               ok, iters, threshold, eps, label, hist)
    if not best.converged:
        logger.warning("penalised solve did not converge within %d iterations per stage",
                       schedule.max_inner_iters)
    return best


def closed_form_seed(geometry: Geometry, bc: str, u0: float, lam: float) -> Optional[GridFunction]:
    """Sampled closed-form radial minimiser for the problem, if one is known and nonconstant."""
    from . import radial

    if isinstance(geometry, Interval):
        if bc != NAVIER:
            return None
        # u = u0 v with v = u_rho: energy 6 u0^2 / s^3 + 2 lam s, optimal s = sqrt(3) (u0^2/lam)^(1/4)
        s = math.sqrt(3.0) * (u0**2 / lam) ** 0.25
        R = geometry.R
        if s >= R or 6 * u0**2 / s**3 + 2 * lam * s >= 2 * lam * R:
            return None
        rho = R - s
        return GridFunction(geometry, u0 * radial.eval_1d(R, rho, geometry.nodes), bc, u0)
    if geometry.n != 2:
        return None
    R = geometry.R
    unit = (radial.infimum_navier2d(u0, lam * R**4) if bc == NAVIER
            else radial.infimum_dirichlet2d(u0, lam * R**4))
    if unit.candidate is None:
        return None
    cand = radial._rescale_candidate(unit.candidate, R)
    return GridFunction.sample(geometry, bc, u0, cand.value)
