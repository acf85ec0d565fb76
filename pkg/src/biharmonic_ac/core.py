"""Shared value types for the biharmonic flat-set toolkit."""

from __future__ import annotations

import math
from dataclasses import dataclass

NAVIER = "navier"
DIRICHLET = "dirichlet"
BC_KINDS = (NAVIER, DIRICHLET)

CONSTANT = "Constant"
FREE_BOUNDARY = "FreeBoundary"
TIE = "Tie"


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def unit_ball_volume(n: int) -> float:
    """Lebesgue measure of the unit ball in R^n (2 for n = 1, pi for n = 2)."""
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def check_bc(bc: str) -> str:
    bc = bc.lower()
    if bc not in BC_KINDS:
        raise DomainError(f"bc must be one of {BC_KINDS}, got {bc!r}")
    return bc


@dataclass(frozen=True)
class EnergyBreakdown:
    """The two parts of F_lambda(u) = int (Lap u)^2 + lambda |{u != 0}|.

    ``total`` is always computed as the sum of the parts.
    """

    dirichlet_part: float
    measure_part: float
    lam: float = 1.0

    def __post_init__(self):
        if self.dirichlet_part < 0 or self.measure_part < 0:
            raise DomainError(
                f"energy parts must be nonnegative, got "
                f"({self.dirichlet_part}, {self.measure_part})"
            )
        if not self.lam > 0:
            raise DomainError(f"lambda must be > 0, got {self.lam}")

    @property
    def total(self) -> float:
        return self.dirichlet_part + self.measure_part

    def scaled(self, factor: float) -> "EnergyBreakdown":
        return EnergyBreakdown(self.dirichlet_part * factor, self.measure_part * factor, self.lam)

    def to_dict(self) -> dict:
        return {
            "dirichlet_part": self.dirichlet_part,
            "measure_part": self.measure_part,
            "total": self.total,
            "lambda": self.lam,
        }
