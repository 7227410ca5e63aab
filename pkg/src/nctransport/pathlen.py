"""Free-path length laws p(s) and the path-dependent cross section they induce.

A law is one of three variants:

* :class:`ClassicalExponential` -- ``p(s) = sigma_t * exp(-sigma_t*s)``,
  constant cross section;
* :class:`DiffusionMatched` -- ``p(s) = lam**2 * s * exp(-lam*s)`` with
  ``lam = sqrt(6/<s^2>)``, the Gamma(2) law for which nonclassical transport
  coincides with nonclassical diffusion in an infinite medium;
* :class:`Tabulated` -- piecewise-linear density read from data.

Every law exposes ``pdf``, ``cdf``, ``survival``, ``sigma_t_of_s`` (the
hazard rate ``p(s)/survival(s)``), ``sample`` and ``moments``. Lengths are
in mean-free-path scale units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quadrature import QuadratureError, integrate_finite, integrate_semi_infinite

EXPONENTIAL, DIFFUSION_MATCHED, TABULATED = 0, 1, 2


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


@dataclass(frozen=True)
class Moments:
    first: float
    second: float

    @property
    def variance(self) -> float:
        return self.second - self.first**2


def lambda_from_mean_square(mean_square_free_path: float) -> float:
    """``sqrt(6/<s^2>)``; shared by the laws and the diffusion oracle."""
    if not mean_square_free_path > 0:
        raise DomainError(f"mean-square free path must be positive, got {mean_square_free_path!r}")
    return math.sqrt(6.0 / mean_square_free_path)


def _as_nonneg(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("path length must be >= 0")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class PathLengthLaw:
    """Base class; subclasses supply the density and its closed forms."""

    kind: int

    def pdf(self, s):
        raise NotImplementedError

    def survival(self, s):
        raise NotImplementedError

    def cdf(self, s):
        s_arr = _as_nonneg(s)
        return _out(1.0 - np.asarray(self.survival(s_arr)), s)

    def sigma_t_of_s(self, s):
        s_arr = _as_nonneg(s)
        surv = np.asarray(self.survival(s_arr), dtype=float)
        if np.any(surv <= 0):
            raise DomainError("cross section undefined where survival probability is zero")
        return _out(np.asarray(self.pdf(s_arr)) / surv, s)

    def optical_depth(self, s):
        """``int_0^s sigma_t_of_s``, i.e. ``-ln survival(s)``."""
        s_arr = _as_nonneg(s)
        with np.errstate(divide="ignore"):
            return _out(-np.log(np.asarray(self.survival(s_arr), dtype=float)), s)

    def sample(self, rng, size=None):
        raise NotImplementedError

    def moments(self) -> Moments:
        raise NotImplementedError

    @property
    def length_scale(self) -> float:
        """Decay length of the tail, used to size quadrature and grids."""
        raise NotImplementedError

    def kernel_params(self):
        """``(kind, param, s, p, cdf)`` arrays consumed by the compiled transport kernel."""
        empty = np.zeros(1)
        return self.kind, float(self._param()), empty, empty, empty

    def _param(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ClassicalExponential(PathLengthLaw):
    sigma_t: float
    kind: int = field(default=EXPONENTIAL, init=False, repr=False)

    def __post_init__(self):
        if not self.sigma_t > 0:
            raise DomainError(f"sigma_t must be positive, got {self.sigma_t!r}")

    def pdf(self, s):
        s_arr = _as_nonneg(s)
        return _out(self.sigma_t * np.exp(-self.sigma_t * s_arr), s)

    def survival(self, s):
        s_arr = _as_nonneg(s)
        return _out(np.exp(-self.sigma_t * s_arr), s)

    def sigma_t_of_s(self, s):
        s_arr = _as_nonneg(s)
        return _out(np.full_like(s_arr, self.sigma_t), s)

    def optical_depth(self, s):
        s_arr = _as_nonneg(s)
        return _out(self.sigma_t * s_arr, s)

    def sample(self, rng, size=None):
        return -np.log(rng.random(size)) / self.sigma_t

    def moments(self) -> Moments:
        return Moments(1.0 / self.sigma_t, 2.0 / self.sigma_t**2)

    @property
    def length_scale(self) -> float:
        return 1.0 / self.sigma_t

    def _param(self):
        return self.sigma_t


@dataclass(frozen=True)
class DiffusionMatched(PathLengthLaw):
    """Gamma(2) law that preserves the supplied mean-square free path.

    ``p(s) = lam**2 s exp(-lam s)``, ``survival(s) = (1 + lam s) exp(-lam s)``,
    ``sigma_t(s) = lam**2 s / (1 + lam s)``. Its first moment is
    ``2/lam = sqrt(6 <s^2>)/3``, which in general differs from the medium's
    true mean free path; its second moment equals ``<s^2>`` exactly.
    """

    mean_square_free_path: float
    kind: int = field(default=DIFFUSION_MATCHED, init=False, repr=False)

    def __post_init__(self):
        lambda_from_mean_square(self.mean_square_free_path)

    @property
    def lam(self) -> float:
        return lambda_from_mean_square(self.mean_square_free_path)

    def pdf(self, s):
        lam = self.lam
        s_arr = _as_nonneg(s)
        return _out(lam * lam * s_arr * np.exp(-lam * s_arr), s)

    def survival(self, s):
        lam = self.lam
        s_arr = _as_nonneg(s)
        return _out((1.0 + lam * s_arr) * np.exp(-lam * s_arr), s)

    def sigma_t_of_s(self, s):
        lam = self.lam
        s_arr = _as_nonneg(s)
        return _out(lam * lam * s_arr / (1.0 + lam * s_arr), s)

    def optical_depth(self, s):
        lam = self.lam
        s_arr = _as_nonneg(s)
        return _out(lam * s_arr - np.log1p(lam * s_arr), s)

    def sample(self, rng, size=None):
        # sum of two unit exponentials is Gamma(2)
        u1 = rng.random(size)
        u2 = rng.random(size)
        return -np.log(u1 * u2) / self.lam

    def moments(self) -> Moments:
        lam = self.lam
        return Moments(2.0 / lam, 6.0 / (lam * lam))

    @property
    def length_scale(self) -> float:
        return 1.0 / self.lam

    def _param(self):
        return self.lam


def make_diffusion_matched(mean_square_free_path: float) -> DiffusionMatched:
    return DiffusionMatched(float(mean_square_free_path))


@dataclass(frozen=True, eq=False)
class Tabulated(PathLengthLaw):
    """Piecewise-linear density through ``(s_i, p_i)``, zero outside the table.

    The density is divided by its integral at construction; the original
    integral is kept in ``normalization``.
    """

    s: np.ndarray
    p: np.ndarray
    normalization: float = field(init=False)
    kind: int = field(default=TABULATED, init=False, repr=False)

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        p = np.array(self.p, dtype=float)
        if s.ndim != 1 or s.shape != p.shape or len(s) < 2:
            raise DomainError("tabulated law needs matching 1-D arrays with at least two rows")
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(p)):
            raise DomainError("tabulated values must be finite")
        if s[0] < 0 or np.any(np.diff(s) <= 0):
            raise DomainError("abscissae must be >= 0 and strictly increasing")
        if np.any(p < 0):
            raise DomainError("density values must be >= 0")
        seg = 0.5 * (p[1:] + p[:-1]) * np.diff(s)
        total = float(seg.sum())
        if not total > 0:
            raise DomainError("tabulated density integrates to zero")
        p = p / total
        cum = np.concatenate([[0.0], np.cumsum(seg / total)])
        cum[-1] = 1.0
        for name, val in (("s", s), ("p", p), ("normalization", total), ("_cum", cum)):
            object.__setattr__(self, name, val)
        for arr in (s, p, cum):
            arr.setflags(write=False)

    def __eq__(self, other):
        return (isinstance(other, Tabulated) and np.array_equal(self.s, other.s)
                and np.array_equal(self.p, other.p))

    __hash__ = None

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.p) / np.diff(self.s)

    def _segment(self, s_arr):
        idx = np.clip(np.searchsorted(self.s, s_arr, side="right") - 1, 0, len(self.s) - 2)
        return idx

    def pdf(self, s):
        s_arr = _as_nonneg(s)
        val = np.interp(s_arr, self.s, self.p, left=0.0, right=0.0)
        return _out(val, s)

    def cdf(self, s):
        s_arr = _as_nonneg(s)
        i = self._segment(s_arr)
        t = np.clip(s_arr, self.s[0], self.s[-1]) - self.s[i]
        val = self._cum[i] + self.p[i] * t + 0.5 * self.slopes[i] * t * t
        val = np.where(s_arr <= self.s[0], 0.0, np.where(s_arr >= self.s[-1], 1.0, val))
        return _out(np.clip(val, 0.0, 1.0), s)

    def survival(self, s):
        s_arr = _as_nonneg(s)
        return _out(1.0 - np.asarray(self.cdf(s_arr)), s)

    def sample(self, rng, size=None):
        u = np.asarray(rng.random(size), dtype=float)
        i = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(self.s) - 2)
        d = u - self._cum[i]
        pi = self.p[i]
        m = self.slopes[i]
        # root of pi*t + m*t**2/2 = d in the cancellation-free form
        denom = pi + np.sqrt(np.maximum(pi * pi + 2.0 * m * d, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom > 0, 2.0 * d / denom, 0.0)
        out = self.s[i] + np.minimum(t, self.s[i + 1] - self.s[i])
        return float(out) if size is None else out

    def moments(self) -> Moments:
        _, first, second = quadrature_moments(self)
        return Moments(first, second)

    def exact_moment(self, k: int) -> float:
        """Closed-form ``int s^k p(s) ds`` of the piecewise-linear density."""
        a, b = self.s[:-1], self.s[1:]
        m = self.slopes
        alpha = self.p[:-1] - m * a
        return float(np.sum(alpha * (b ** (k + 1) - a ** (k + 1)) / (k + 1)
                            + m * (b ** (k + 2) - a ** (k + 2)) / (k + 2)))

    @property
    def length_scale(self) -> float:
        return float(self.exact_moment(1))

    def kernel_params(self):
        return self.kind, 0.0, np.ascontiguousarray(self.s), np.ascontiguousarray(self.p), \
            np.ascontiguousarray(self._cum)


def load_tabulated(path) -> Tabulated:
    """Read a two-column ``s p(s)`` text file ('#' starts a comment)."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DomainError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise DomainError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise DomainError(f"{path}: no data rows")
    s, p = np.array(rows).T
    return Tabulated(s, p)


def quadrature_moments(law: PathLengthLaw) -> tuple[float, float, float]:
    """``(int p, int s p, int s^2 p)`` by adaptive quadrature, independent of closed forms."""
    if isinstance(law, Tabulated):
        out = []
        for k in (0, 1, 2):
            total = 0.0
            for a, b in zip(law.s[:-1], law.s[1:]):
                total += integrate_finite(lambda x, k=k: x**k * law.pdf(x), a, b)
            out.append(total)
        return tuple(out)
    scale = law.length_scale
    out = []
    for k in (0, 1, 2):
        val = integrate_semi_infinite(lambda x, k=k: x**k * law.pdf(x), scale)
        if not math.isfinite(val):
            raise QuadratureError(f"moment {k} diverges")
        out.append(val)
    return tuple(out)
