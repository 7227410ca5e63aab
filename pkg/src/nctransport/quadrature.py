"""Adaptive Gauss-Kronrod integration on finite and semi-infinite ranges.

Thin wrapper over QUADPACK (``scipy.integrate.quad``). Semi-infinite tails
are mapped onto (0, 1] with ``s = a - scale*ln(u)``, which turns an
exponentially decaying integrand into a polynomial in ``ln(u)``.
"""

from __future__ import annotations

import math
import warnings

from scipy import integrate

RTOL = 1e-10
ATOL = 1e-14


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge or produced a non-finite value."""


def integrate_finite(func, a: float, b: float, points=None, rtol: float = RTOL, atol: float = ATOL) -> float:
    if b <= a:
        return 0.0
    if points is not None:
        points = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(func, a, b, points=points, epsabs=atol, epsrel=rtol, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {exc}") from None
    if not math.isfinite(val):
        raise QuadratureError(f"non-finite integral on [{a}, {b}]")
    return val


def integrate_tail(func, a: float, scale: float, rtol: float = RTOL, atol: float = ATOL) -> float:
    """Integral of ``func`` over [a, inf) for integrands decaying like exp(-s/scale)."""

    def mapped(u):
        return func(a - scale * math.log(u)) * scale / u

    return integrate_finite(mapped, 0.0, 1.0, rtol=rtol, atol=atol)


def integrate_semi_infinite(func, scale: float, split: float | None = None,
                            rtol: float = RTOL, atol: float = ATOL) -> float:
    """Integral of ``func`` over [0, inf).

    The range is split at ``split`` (default ``20*scale``): adaptive GK on the
    body, exponential substitution on the tail.
    """
    if split is None:
        split = 20.0 * scale
    return integrate_finite(func, 0.0, split, rtol=rtol, atol=atol) + integrate_tail(
        func, split, scale, rtol=rtol, atol=atol
    )
