"""Source iteration for the integral transport equation in spherical symmetry.

The collision-rate density obeys ``f = K(c f + Q)`` where ``K`` convolves
with the first-flight kernel ``p(|x-x'|)/(4 pi |x-x'|^2)``. For radially
symmetric ``g`` the angular integral collapses (substitute ``u = |x-x'|``)
and

    (K g)(r) = 1/(2r) int_0^inf r' g(r') E(|r-r'|, r+r') dr',
    E(a, b)  = int_a^b p(u)/u du.

Discretisation: ``h(r) = r f(r)`` is smooth even where ``f ~ 1/r``, so ``h``
is replaced by a local cubic Lagrange interpolant on each cell and the
product with ``E`` is integrated by Gauss-Legendre per cell (product
integration). The operator therefore integrates the steep kernel exactly
up to Gauss error and only interpolates the slowly varying ``h``.

The point source never touches the mesh: its first- and second-flight
contributions are evaluated analytically / by adaptive quadrature, and the
iteration runs on the remaining (twice-or-more collided) part.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .pathlen import (
    ClassicalExponential,
    DiffusionMatched,
    DomainError,
    PathLengthLaw,
    Tabulated,
)
from .quadrature import integrate_finite, integrate_tail

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
INTERP_ORDER = 3
GAUSS_POINTS = 8


class ConvergenceError(RuntimeError):
    """Source iteration hit ``max_iters``; carries the last iterate."""

    def __init__(self, message, last_iterate, residual, iterations):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


# --------------------------------------------------------------------------
# Reduced kernel
# --------------------------------------------------------------------------

class ReducedKernel:
    """``E(a, b) = int_a^b p(u)/u du`` for the law, vectorised in ``a`` and ``b``."""

    def __init__(self, law: PathLengthLaw):
        self.law = law
        self.singular = float(law.pdf(0.0)) > 0.0
        if isinstance(law, Tabulated):
            s, p = law.s, law.p
            m = law.slopes
            self._alpha = p[:-1] - m * s[:-1]
            self._m = m
            seg = np.array([self._piece(i, s[i], s[i + 1]) for i in range(len(s) - 1)])
            # tail[i] = int_{s_i}^{s_last} p(u)/u du
            self._tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])

    def _piece(self, i, lo, hi):
        alpha, m = self._alpha[i], self._m[i]
        if alpha == 0.0:
            return m * (hi - lo)
        with np.errstate(divide="ignore"):
            return alpha * np.log(hi / lo) + m * (hi - lo)

    def tail(self, a):
        """``int_a^inf p(u)/u du``."""
        a = np.asarray(a, dtype=float)
        law = self.law
        if isinstance(law, DiffusionMatched):
            lam = law.lam
            return lam * np.exp(-lam * a)
        if isinstance(law, ClassicalExponential):
            return law.sigma_t * special.exp1(law.sigma_t * a)
        s = law.s
        x = np.clip(a, s[0], s[-1])
        i = np.clip(np.searchsorted(s, x, side="right") - 1, 0, len(s) - 2)
        alpha, m = self._alpha[i], self._m[i]
        hi = s[i + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(alpha == 0.0, 0.0, alpha * np.log(hi / x))
        val = logs + m * (hi - x) + self._tail[i + 1]
        return np.where(a >= s[-1], 0.0, val)

    def __call__(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        law = self.law
        if isinstance(law, DiffusionMatched):
            lam = law.lam
            return lam * (np.exp(-lam * a) - np.exp(-lam * b))
        with np.errstate(invalid="ignore"):
            val = self.tail(a) - self.tail(b)
        return np.where(b <= a, 0.0, val)


def reduce_kernel(law: PathLengthLaw) -> ReducedKernel:
    return ReducedKernel(law)


# --------------------------------------------------------------------------
# Grid and fields
# --------------------------------------------------------------------------

@dataclass
class RadialGrid:
    """Radial nodes ``0 < r_1 < ... < r_N`` with volume quadrature weights.

    ``weights`` satisfy ``int f dV ~ sum(weights * f)`` for fields on the grid.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise DomainError("nodes and weights must be matching 1-D arrays")
        if not self.nodes[0] > 0 or np.any(np.diff(self.nodes) <= 0):
            raise DomainError("nodes must be positive and strictly increasing")
        if np.any(self.weights <= 0):
            raise DomainError("quadrature weights must be positive")

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def geometric(cls, r_min: float, r_max: float, n: int = 400) -> "RadialGrid":
        nodes = np.geomspace(r_min, r_max, n)
        return cls(nodes, _volume_weights(nodes))


@dataclass
class RadialField:
    grid: RadialGrid
    values: np.ndarray
    rel_err: np.ndarray | None = None
    iterations: int = 0
    residual: float = 0.0
    update_norms: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise DomainError("field values must match the grid")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("field values must be finite")

    @property
    def r(self):
        return self.grid.nodes

    def integral(self) -> float:
        """``int f dV`` over the grid's support."""
        return float(np.dot(self.grid.weights, self.values))

    def at(self, r):
        """Evaluate at arbitrary radii inside the grid by cubic interpolation of ``r*f``."""
        r = np.asarray(r, dtype=float)
        nodes = self.grid.nodes
        if np.any(r < nodes[0]) or np.any(r > nodes[-1]):
            raise DomainError("radius outside the grid")
        h = nodes * self.values
        idx = _stencil(nodes, np.clip(np.searchsorted(nodes, r, side="right"), 1, len(nodes) - 1))
        out = np.empty_like(r)
        for j, (ri, st) in enumerate(zip(np.atleast_1d(r), idx)):
            basis = _lagrange_basis(nodes[st], np.array([ri]))[:, 0]
            out.flat[j] = basis @ h[st] / ri
        return out

    def scaled(self, factor: float) -> "RadialField":
        rel = None if self.rel_err is None else self.rel_err.copy()
        return RadialField(self.grid, self.values * factor, rel)


def _lagrange_basis(xs, t):
    """Basis values ``L_i(t)`` on nodes ``xs``, shape ``(len(xs), len(t))``."""
    out = np.ones((len(xs), len(t)))
    for i in range(len(xs)):
        for j in range(len(xs)):
            if i != j:
                out[i] *= (t - xs[j]) / (xs[i] - xs[j])
    return out


def _stencil(nodes, cells):
    """Interpolation node indices for cell ``k`` = ``[nodes[k-1], nodes[k]]``."""
    n = len(nodes)
    p = INTERP_ORDER
    cells = np.atleast_1d(cells)
    lo = np.clip(cells - 1 - (p - 1) // 2, 0, n - (p + 1))
    return lo[:, None] + np.arange(p + 1)[None, :]


def _cells(nodes):
    """Cells ``[0, r_1], [r_1, r_2], ...``: edges and interpolation stencils.

    On the innermost cell ``h`` is held at ``h(r_1)``.
    """
    edges = np.concatenate([[0.0], nodes])
    stencils = _stencil(nodes, np.arange(1, len(nodes)))
    return edges, stencils


def _gauss(a, b, graded=None):
    x, w = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    if graded == "left":   # cluster at a: r = a + (b-a) t^2
        return a + (b - a) * t * t, (b - a) * 2.0 * t * w
    if graded == "right":
        return b - (b - a) * t * t, (b - a) * 2.0 * t * w
    return a + (b - a) * t, (b - a) * w


def _volume_weights(nodes):
    """Weights ``w_j`` with ``int f dV = 4 pi int r h dr ~ sum_j w_j f_j``."""
    edges, stencils = _cells(nodes)
    w = np.zeros(len(nodes))
    rp, wp = _gauss(edges[0], edges[1])
    w[0] += FOUR_PI * np.sum(rp * wp) * nodes[0]
    for k, st in enumerate(stencils, start=1):
        rp, wp = _gauss(edges[k], edges[k + 1])
        basis = _lagrange_basis(nodes[st], rp)
        w[st] += FOUR_PI * (basis @ (rp * wp)) * nodes[st]
    return w


# --------------------------------------------------------------------------
# Operators
# --------------------------------------------------------------------------

def kernel_matrix(kernel: ReducedKernel, grid: RadialGrid) -> np.ndarray:
    """Matrix ``A`` with ``(K g)(r_i) ~ sum_j A_ij g(r_j)``."""
    nodes = grid.nodes
    n = len(nodes)
    edges, stencils = _cells(nodes)
    H = np.zeros((n, n))  # acts on h = r g

    def block(r_out, rp, wp):
        return kernel(np.abs(r_out[:, None] - rp[None, :]), r_out[:, None] + rp[None, :]) * wp[None, :]

    for k in range(n):
        a, b = edges[k], edges[k + 1]
        rp, wp = _gauss(a, b)
        st = [0] if k == 0 else stencils[k - 1]
        basis = np.ones((1, len(rp))) if k == 0 else _lagrange_basis(nodes[st], rp)
        H[:, st] += block(nodes, rp, wp) @ basis.T
        if not kernel.singular:
            continue
        # E(|r-r'|, .) has a log singularity at r' = r: redo the two rows whose
        # node is a cell endpoint with points graded towards that endpoint
        for i, mode in ((k - 1, "left"), (k, "right")):
            if i < 0:
                continue
            gp, gw = _gauss(a, b, graded=mode)
            gbasis = np.ones((1, len(gp))) if k == 0 else _lagrange_basis(nodes[st], gp)
            row = nodes[i:i + 1]
            H[i, st] += gbasis @ block(row, gp, gw)[0] - basis @ block(row, rp, wp)[0]
    return H * nodes[None, :] / (2.0 * nodes[:, None])


def first_flight_source(law: PathLengthLaw, grid: RadialGrid, strength: float) -> RadialField:
    """Uncollided collision density ``q p(r)/(4 pi r^2)`` of a point source at the origin."""
    r = grid.nodes
    return RadialField(grid, strength * np.asarray(law.pdf(r)) / (FOUR_PI * r * r))


def second_flight_source(law: PathLengthLaw, grid: RadialGrid, strength: float) -> np.ndarray:
    """``K`` applied to the first-flight density, by adaptive quadrature per node."""
    kernel = ReducedKernel(law)
    scale = law.length_scale
    out = np.empty(len(grid))

    def integrand(rp, r):
        # r' * f1(r') = q p(r') / (4 pi r')
        return float(law.pdf(rp)) / (FOUR_PI * rp) * float(kernel(abs(r - rp), r + rp))

    if isinstance(law, Tabulated):
        return strength * _second_flight_tabulated(law, kernel, grid.nodes)

    for i, r in enumerate(grid.nodes):
        body = integrate_finite(lambda x: integrand(x, r), 0.0, r)
        body += integrate_finite(lambda x: integrand(x, r), r, r + 40.0 * scale)
        body += integrate_tail(lambda x: integrand(x, r), r + 40.0 * scale, scale)
        out[i] = strength * body / (2.0 * r)
    return out


def _second_flight_tabulated(law, kernel, nodes):
    # Compact support: r' <= s_last and |r - r'| < s_last. Between kinks (r', |r-r'|
    # or r+r' at an abscissa) the integrand is smooth apart from log endpoint
    # singularities, which the map r' = a + (b-a)(10t^3 - 15t^4 + 6t^5) tames.
    x, w = np.polynomial.legendre.leggauss(24)
    t = 0.5 * (x + 1.0)
    map_t = t**3 * (10 - 15 * t + 6 * t * t)
    map_w = 0.5 * w * 30 * t * t * (1 - t) ** 2
    s_last = law.s[-1]
    out = np.empty(len(nodes))
    for i, r in enumerate(nodes):
        lo, hi = max(0.0, r - s_last), min(s_last, r + s_last)
        if hi <= lo:
            out[i] = 0.0
            continue
        cuts = np.concatenate([law.s, r - law.s, r + law.s, law.s - r, [r, lo, hi]])
        cuts = np.unique(cuts[(cuts >= lo) & (cuts <= hi)])
        a, b = cuts[:-1, None], cuts[1:, None]
        rp = a + (b - a) * map_t[None, :]
        wp = (b - a) * map_w[None, :]
        vals = np.asarray(law.pdf(rp)) / (FOUR_PI * rp) * kernel(np.abs(r - rp), r + rp)
        out[i] = np.sum(vals * wp) / (2.0 * r)
    return out


# --------------------------------------------------------------------------
# Solver
# --------------------------------------------------------------------------

def default_grid(law: PathLengthLaw, c: float, n: int = 400) -> RadialGrid:
    """Geometric grid from ``1e-3 <s>`` to ``15/kappa``, ``kappa = sqrt(6(1-c)/<s^2>)``."""
    mom = law.moments()
    kappa = math.sqrt(6.0 * (1.0 - c) / mom.second)
    return RadialGrid.geometric(1e-3 * mom.first, 15.0 / kappa, n)


def default_max_iters(c: float, tol: float) -> int:
    if c <= 0.0:
        return 50
    return int(math.ceil(math.log(tol) / math.log(c))) + 50


def solve_collision_density(problem, grid: RadialGrid | None = None, tol: float = 1e-8,
                            max_iters: int | None = None) -> RadialField:
    """Converged collision-rate density for a point source in an infinite medium.

    Iterates ``f <- K Q + c K f`` from ``f = K Q`` until the relative sup-norm
    update of ``r f`` drops below ``tol``. Measuring ``r f`` (bounded at the
    origin) keeps the 1/r peak near the source from masking the far field. Raises :class:`ConvergenceError` otherwise.
    """
    c = problem.c
    if not 0.0 <= c < 1.0:
        raise DomainError(f"scattering ratio must lie in [0, 1), got {c!r}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    law = problem.law
    q = problem.source.strength
    if grid is None:
        grid = default_grid(law, c)
    if max_iters is None:
        max_iters = default_max_iters(c, tol)

    f1 = first_flight_source(law, grid, q).values
    if c == 0.0 or q == 0.0:
        return RadialField(grid, f1, iterations=1)

    r = grid.nodes
    A = kernel_matrix(ReducedKernel(law), grid)
    s2 = c * second_flight_source(law, grid, q)
    collided = np.zeros(len(grid))
    f = f1.copy()
    norms = []
    for it in range(1, max_iters + 1):
        collided = s2 + c * (A @ collided)
        f_new = f1 + collided
        update = np.max(np.abs(f_new - f) * r) / np.max(np.abs(f_new) * r)
        norms.append(update)
        f = f_new
        if update < tol:
            log.debug("source iteration converged in %d sweeps", it)
            return RadialField(grid, f, iterations=it, residual=update, update_norms=norms)
    raise ConvergenceError(
        f"source iteration did not reach tol={tol:g} in {max_iters} sweeps (residual {update:.3e})",
        RadialField(grid, f, iterations=max_iters, residual=update, update_norms=norms),
        update,
        max_iters,
    )


def balance(field: RadialField, c: float, kappa: float | None = None) -> float:
    """``(1-c) int f dV`` including an exponential tail beyond the last node."""
    total = field.integral()
    if kappa is not None and kappa > 0:
        R = field.r[-1]
        amp = field.values[-1] * R * math.exp(kappa * R)
        total += FOUR_PI * amp * math.exp(-kappa * R) * (R / kappa + 1.0 / kappa**2)
    return (1.0 - c) * total
