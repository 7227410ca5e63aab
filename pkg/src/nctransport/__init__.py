"""Nonclassical particle transport with arbitrary free-path laws.

Three independent routes to the collision-rate density around a point
source in an infinite medium: analog Monte Carlo (:mod:`.mc_transport`),
the integral equation (:mod:`.integral_solver`) and the closed-form
nonclassical diffusion solution (:mod:`.diffusion_oracle`).
"""

from .pathlen import (
    ClassicalExponential,
    DiffusionMatched,
    DomainError,
    Moments,
    PathLengthLaw,
    Tabulated,
    load_tabulated,
    make_diffusion_matched,
)
from .problem import PointIsotropicSource, TransportProblem

__version__ = "0.1.0"

__all__ = [
    "ClassicalExponential",
    "DiffusionMatched",
    "DomainError",
    "Moments",
    "PathLengthLaw",
    "PointIsotropicSource",
    "Tabulated",
    "TransportProblem",
    "load_tabulated",
    "make_diffusion_matched",
]
