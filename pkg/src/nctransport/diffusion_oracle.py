"""Closed-form point-source solutions of the nonclassical diffusion equation.

For ``-D lap(phi) + (1-c)/<s> phi = Q`` with ``D = <s^2>/(6<s>)`` and a
point source of strength ``q`` in an infinite medium, the collision-rate
density ``f = phi/<s>`` satisfies ``-lap(f) + kappa**2 f = lam**2 q delta``
with ``lam**2 = 6/<s^2>`` and ``kappa = lam*sqrt(1-c)``, hence

    f(r) = q * lam**2 * exp(-kappa*r) / (4*pi*r).

These formulas are the ground truth the transport solvers are checked
against, so nothing here calls into the solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pathlen import DomainError, lambda_from_mean_square

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class DiffusionParams:
    """Medium parameters; ``mean_free_path`` is supplied, never derived from ``<s^2>``."""

    mean_free_path: float
    mean_square_free_path: float
    c: float

    def __post_init__(self):
        if not self.mean_free_path > 0:
            raise DomainError("mean free path must be positive")
        if not self.mean_square_free_path > 0:
            raise DomainError("mean-square free path must be positive")
        if not 0.0 <= self.c < 1.0:
            raise DomainError(f"scattering ratio must lie in [0, 1), got {self.c!r}")

    @property
    def lam(self) -> float:
        return lambda_from_mean_square(self.mean_square_free_path)

    @property
    def kappa(self) -> float:
        return self.lam * math.sqrt(1.0 - self.c)

    @property
    def diffusion_coefficient(self) -> float:
        return self.mean_square_free_path / (6.0 * self.mean_free_path)


def _positive_r(r):
    arr = np.asarray(r, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("radius must be > 0")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def greens_function(lam: float, r):
    """``exp(-lam r)/(4 pi r)``, the free-space Green's function of ``-lap + lam**2``."""
    r_arr = _positive_r(r)
    return _out(np.exp(-lam * r_arr) / (FOUR_PI * r_arr), r)


def point_source_collision_density(params: DiffusionParams, strength: float, r):
    r_arr = _positive_r(r)
    lam = params.lam
    val = strength * lam * lam * np.exp(-params.kappa * r_arr) / (FOUR_PI * r_arr)
    return _out(val, r)


def point_source_scalar_flux(params: DiffusionParams, strength: float, r):
    return _out(params.mean_free_path * np.asarray(point_source_collision_density(params, strength, r)), r)


def total_collision_rate(params: DiffusionParams, strength: float) -> float:
    """``int f dV = q lam**2 / kappa**2 = q/(1-c)``."""
    return strength / (1.0 - params.c)


def shell_average_collision_density(params: DiffusionParams, strength: float, r_lo, r_hi):
    """Volume average of ``f`` over the shells ``[r_lo, r_hi)``.

    Uses ``int_a^b r exp(-k r) dr = [-(r/k + 1/k**2) exp(-k r)]_a^b``.
    """
    a = np.asarray(r_lo, dtype=float)
    b = np.asarray(r_hi, dtype=float)
    if np.any(a < 0) or np.any(b <= a):
        raise DomainError("shells need 0 <= r_lo < r_hi")
    k = params.kappa
    lam = params.lam

    def antideriv(x):
        return -(x / k + 1.0 / k**2) * np.exp(-k * x)

    collisions = strength * lam * lam * (antideriv(b) - antideriv(a))
    volume = FOUR_PI / 3.0 * (b**3 - a**3)
    return _out(collisions / volume, r_lo)
