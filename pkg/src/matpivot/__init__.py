"""Simulation and verification toolkit for products of i.i.d. random
matrices: alignment calculus, Schottky measures, pivotal extraction, and
seeded Monte Carlo experiments."""

from ._dispatch import BACKEND
from .linalg import (DomainError, ProjPoint, SingularData, SpectralData,
                     cone_test, is_aligned, op_norm, proj_dist, proj_point,
                     sigma, spectral, wedge_square)

__all__ = [
    "BACKEND", "DomainError", "ProjPoint", "SingularData", "SpectralData",
    "cone_test", "is_aligned", "op_norm", "proj_dist", "proj_point",
    "sigma", "spectral", "wedge_square",
]

__version__ = "0.1.0"
