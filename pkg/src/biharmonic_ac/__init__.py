"""Minimisers of the biharmonic Alt-Caffarelli functional int (Lap u)^2 + lambda |{u != 0}|."""

from .core import (
    CONSTANT,
    DIRICHLET,
    FREE_BOUNDARY,
    NAVIER,
    TIE,
    DomainError,
    EnergyBreakdown,
    unit_ball_volume,
)

__version__ = "0.1.0"
