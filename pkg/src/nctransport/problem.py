"""Problem description shared by the Monte Carlo and deterministic solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

from .pathlen import DomainError, PathLengthLaw


@dataclass(frozen=True)
class PointIsotropicSource:
    """Isotropic point source at the origin emitting ``strength`` particles."""

    strength: float = 1.0

    def __post_init__(self):
        if not self.strength >= 0:
            raise DomainError("source strength must be >= 0")


@dataclass(frozen=True)
class TransportProblem:
    """Infinite homogeneous medium with scattering ratio ``c`` and free-path law ``law``."""

    law: PathLengthLaw
    c: float
    source: PointIsotropicSource = field(default_factory=PointIsotropicSource)

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise DomainError(f"scattering ratio must lie in [0, 1), got {self.c!r}")
