"""Analog Monte Carlo for nonclassical transport from a point isotropic source.

Each history starts at the origin with an isotropic direction and a fresh
path length. A free path ``s`` is drawn from the law (the path length since
the last event is reset at every birth and collision), the particle moves
``s`` along its direction and collides. The collision is scored in the
radial shell that contains it; with probability ``c`` the particle
re-emerges isotropically, otherwise it is absorbed.

Reproducibility does not depend on scheduling: history ``n`` draws from
the counter-based substream ``(master_seed, n)``, histories are grouped
into fixed chunks of :data:`CHUNK` whatever the worker count, and chunk
tallies are merged in chunk order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .integral_solver import RadialField, RadialGrid
from .pathlen import DIFFUSION_MATCHED, EXPONENTIAL, DomainError
from .problem import TransportProblem
from .rng import CounterStream, stream_key, uniform_at

CHUNK = 4096
ROULETTE_THRESHOLD = 0.25
ROULETTE_SURVIVAL = 0.5

# extra bins after the K shells
OVERFLOW, UNDERFLOW = 0, 1


# --------------------------------------------------------------------------
# Compiled kernels
# --------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sample_path(kind, param, tab_s, tab_p, tab_cdf, key, ctr):
    """Free path for the law; returns ``(s, next_counter)``."""
    if kind == EXPONENTIAL:
        u = uniform_at(key, ctr)
        return -math.log(u) / param, ctr + np.uint64(1)
    if kind == DIFFUSION_MATCHED:
        u1 = uniform_at(key, ctr)
        u2 = uniform_at(key, ctr + np.uint64(1))
        return -math.log(u1 * u2) / param, ctr + np.uint64(2)
    u = uniform_at(key, ctr)
    n = tab_s.shape[0]
    i = np.searchsorted(tab_cdf, u, side="right") - 1
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    d = u - tab_cdf[i]
    pi = tab_p[i]
    m = (tab_p[i + 1] - pi) / (tab_s[i + 1] - tab_s[i])
    disc = pi * pi + 2.0 * m * d
    if disc < 0.0:
        disc = 0.0
    denom = pi + math.sqrt(disc)
    t = 2.0 * d / denom if denom > 0.0 else 0.0
    width = tab_s[i + 1] - tab_s[i]
    if t > width:
        t = width
    return tab_s[i] + t, ctr + np.uint64(1)


@njit(cache=True, nogil=True)
def _direction(key, ctr):
    mu = 2.0 * uniform_at(key, ctr) - 1.0
    phi = 2.0 * math.pi * uniform_at(key, ctr + np.uint64(1))
    st = math.sqrt(max(0.0, 1.0 - mu * mu))
    return st * math.cos(phi), st * math.sin(phi), mu, ctr + np.uint64(2)


@njit(cache=True, nogil=True)
def _bin(edges, r):
    k = edges.shape[0] - 1
    if r < edges[0]:
        return k + 1  # underflow
    if r >= edges[k]:
        return k  # overflow
    return np.searchsorted(edges, r, side="right") - 1


@njit(cache=True, nogil=True)
def _length_inside(x, y, z, ux, uy, uz, s, radius):
    """Length of the segment ``x + t u, 0 <= t <= s`` inside the sphere ``radius``."""
    b = x * ux + y * uy + z * uz
    c0 = x * x + y * y + z * z - radius * radius
    disc = b * b - c0
    if disc <= 0.0:
        return 0.0
    sq = math.sqrt(disc)
    lo = max(-b - sq, 0.0)
    hi = min(-b + sq, s)
    return hi - lo if hi > lo else 0.0


@njit(cache=True, nogil=True)
def _run_chunk(kind, param, tab_s, tab_p, tab_cdf, c, edges, seed, first, count,
               implicit, track):
    nb = edges.shape[0] + 1  # K shells + overflow + underflow
    k_shells = edges.shape[0] - 1
    score = np.zeros(nb)
    score_sq = np.zeros(nb)
    counts = np.zeros(nb, dtype=np.int64)
    track_len = np.zeros(nb)
    hist = np.zeros(nb)
    touched = np.zeros(nb, dtype=np.int64)
    coll_sum = 0
    coll_sq = 0
    useed = np.uint64(seed)
    for h in range(first, first + count):
        key = stream_key(useed, np.uint64(h))
        ctr = np.uint64(0)
        x = 0.0
        y = 0.0
        z = 0.0
        ux, uy, uz, ctr = _direction(key, ctr)
        w = 1.0
        n_touched = 0
        n_coll = 0
        while True:
            s, ctr = _sample_path(kind, param, tab_s, tab_p, tab_cdf, key, ctr)
            if track:
                r0 = math.sqrt(x * x + y * y + z * z)
                x1 = x + s * ux
                y1 = y + s * uy
                z1 = z + s * uz
                r1 = math.sqrt(x1 * x1 + y1 * y1 + z1 * z1)
                tc = -(x * ux + y * uy + z * uz)
                if tc < 0.0:
                    tc = 0.0
                if tc > s:
                    tc = s
                xm = x + tc * ux
                ym = y + tc * uy
                zm = z + tc * uz
                rmin = math.sqrt(xm * xm + ym * ym + zm * zm)
                rmax = max(r0, r1)
                inner = 0.0
                if edges[0] > 0.0:
                    inner = _length_inside(x, y, z, ux, uy, uz, s, edges[0])
                    track_len[k_shells + 1] += w * inner
                j0 = _bin(edges, rmin)
                if j0 > k_shells:
                    j0 = 0
                prev = inner
                j = j0
                while j < k_shells and edges[j] <= rmax:
                    cur = _length_inside(x, y, z, ux, uy, uz, s, edges[j + 1])
                    track_len[j] += w * (cur - prev)
                    prev = cur
                    j += 1
                track_len[k_shells] += w * (s - prev)
            x += s * ux
            y += s * uy
            z += s * uz
            r = math.sqrt(x * x + y * y + z * z)
            b = _bin(edges, r)
            if hist[b] == 0.0:
                touched[n_touched] = b
                n_touched += 1
            hist[b] += w
            counts[b] += 1
            n_coll += 1
            if implicit:
                w *= c
                if w < ROULETTE_THRESHOLD:
                    if uniform_at(key, ctr) < w / ROULETTE_SURVIVAL:
                        w = ROULETTE_SURVIVAL
                    else:
                        w = 0.0
                    ctr += np.uint64(1)
                if w == 0.0:
                    break
            else:
                u = uniform_at(key, ctr)
                ctr += np.uint64(1)
                if u >= c:
                    break
            ux, uy, uz, ctr = _direction(key, ctr)
        for t in range(n_touched):
            b = touched[t]
            score[b] += hist[b]
            score_sq[b] += hist[b] * hist[b]
            hist[b] = 0.0
        coll_sum += n_coll
        coll_sq += n_coll * n_coll
    return score, score_sq, counts, track_len, coll_sum, coll_sq


@njit(cache=True, nogil=True)
def _first_radii(kind, param, tab_s, tab_p, tab_cdf, seed, first, count):
    out = np.empty(count)
    useed = np.uint64(seed)
    for h in range(first, first + count):
        key = stream_key(useed, np.uint64(h))
        ctr = np.uint64(0)
        ux, uy, uz, ctr = _direction(key, ctr)
        s, ctr = _sample_path(kind, param, tab_s, tab_p, tab_cdf, key, ctr)
        out[h - first] = math.sqrt((s * ux) ** 2 + (s * uy) ** 2 + (s * uz) ** 2)
    return out


# --------------------------------------------------------------------------
# Python-level types
# --------------------------------------------------------------------------

@dataclass
class Particle:
    position: np.ndarray
    direction: np.ndarray
    path_length_since_event: float = 0.0
    alive: bool = True


def isotropic_direction(rng) -> np.ndarray:
    """Unit vector uniform on the sphere: ``mu`` uniform on [-1, 1], azimuth on [0, 2 pi)."""
    mu = 2.0 * rng.random() - 1.0
    phi = 2.0 * math.pi * rng.random()
    st = math.sqrt(max(0.0, 1.0 - mu * mu))
    return np.array([st * math.cos(phi), st * math.sin(phi), mu])


@dataclass
class RadialTally:
    """Shell-binned collision estimator of the collision-rate density.

    ``score``/``score_sq`` hold the sum over histories of each history's
    per-shell score and of its square; with analog capture the score is the
    number of collisions. The two extra trailing bins of the raw arrays are
    overflow (beyond the last edge) and underflow (inside the first edge).
    """

    edges: np.ndarray
    score: np.ndarray
    score_sq: np.ndarray
    counts: np.ndarray
    histories_run: int
    collisions: int
    collisions_sq: int
    track_length: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_shells(self) -> int:
        return len(self.edges) - 1

    @property
    def r_lo(self):
        return self.edges[:-1]

    @property
    def r_hi(self):
        return self.edges[1:]

    @property
    def r_mid(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def volumes(self):
        return 4.0 * math.pi / 3.0 * (self.edges[1:] ** 3 - self.edges[:-1] ** 3)

    @property
    def shell_counts(self):
        return self.counts[: self.n_shells]

    @property
    def overflow(self) -> int:
        return int(self.counts[self.n_shells + OVERFLOW])

    @property
    def underflow(self) -> int:
        return int(self.counts[self.n_shells + UNDERFLOW])

    @property
    def estimate(self):
        """Collisions per unit volume per source particle, per shell."""
        return self.score[: self.n_shells] / (self.histories_run * self.volumes)

    @property
    def std_err(self):
        return self.estimate * self.rel_std_err_or_zero

    @property
    def rel_std_err(self):
        """Relative standard error of each shell estimate; NaN where fewer than 2 collisions."""
        n = self.histories_run
        k = self.n_shells
        mean = self.score[:k] / n
        with np.errstate(invalid="ignore", divide="ignore"):
            var = (self.score_sq[:k] / n - mean**2) * n / (n - 1) if n > 1 else np.full(k, np.nan)
            rel = np.sqrt(np.maximum(var, 0.0) / n) / mean
        return np.where(self.counts[:k] >= 2, rel, np.nan)

    @property
    def rel_std_err_or_zero(self):
        return np.nan_to_num(self.rel_std_err, nan=0.0)

    @property
    def mean_collisions(self) -> float:
        return self.collisions / self.histories_run

    @property
    def mean_collisions_std_err(self) -> float:
        n = self.histories_run
        m = self.collisions / n
        var = (self.collisions_sq / n - m * m) * n / (n - 1)
        return math.sqrt(max(var, 0.0) / n)

    def track_length_flux(self):
        """Track-length estimate of the scalar flux per shell (diagnostic only)."""
        if self.track_length is None:
            raise ValueError("tally was run without the track-length estimator")
        return self.track_length[: self.n_shells] / (self.histories_run * self.volumes)

    def merge(self, other: "RadialTally") -> "RadialTally":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge tallies with different shells")
        track = None
        if self.track_length is not None and other.track_length is not None:
            track = self.track_length + other.track_length
        return RadialTally(
            self.edges,
            self.score + other.score,
            self.score_sq + other.score_sq,
            self.counts + other.counts,
            self.histories_run + other.histories_run,
            self.collisions + other.collisions,
            self.collisions_sq + other.collisions_sq,
            track,
            dict(self.meta),
        )

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r_mid", "r_lo", "r_hi", "f_estimate", "rel_std_err", "count"])
        for row in zip(self.r_mid, self.r_lo, self.r_hi, self.estimate, self.rel_std_err, self.shell_counts):
            writer.writerow([f"{row[0]:.10g}", f"{row[1]:.10g}", f"{row[2]:.10g}",
                             f"{row[3]:.12e}", f"{row[4]:.6e}", int(row[5])])
        return buf.getvalue()


def default_shell_edges(problem: TransportProblem, n_shells: int = 60, r_max: float | None = None):
    """Uniform shells on ``[0, 12/kappa]`` with ``kappa = sqrt(6(1-c)/<s^2>)``."""
    if r_max is None:
        kappa = math.sqrt(6.0 * (1.0 - problem.c) / problem.law.moments().second)
        r_max = 12.0 / kappa
    return np.linspace(0.0, r_max, n_shells + 1)


def _check_edges(edges):
    edges = np.ascontiguousarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or edges[0] < 0 or np.any(np.diff(edges) <= 0):
        raise DomainError("shell edges must be strictly increasing with r_0 >= 0")
    return edges


def run_histories(problem: TransportProblem, edges, n_histories: int, master_seed: int,
                  workers: int = 1, implicit_capture: bool = False,
                  track_length: bool = False) -> RadialTally:
    """Run ``n_histories`` histories and return the merged tally.

    Results are bit-identical for any ``workers`` given the same inputs.
    """
    if n_histories < 1:
        raise DomainError("n_histories must be >= 1")
    if workers < 1:
        raise DomainError("workers must be >= 1")
    edges = _check_edges(edges)
    kind, param, tab_s, tab_p, tab_cdf = problem.law.kernel_params()
    seed = int(master_seed) % 2**64
    starts = list(range(0, n_histories, CHUNK))

    def job(start):
        return _run_chunk(kind, param, tab_s, tab_p, tab_cdf, float(problem.c), edges, seed,
                          start, min(CHUNK, n_histories - start), implicit_capture, track_length)

    if workers == 1:
        parts = [job(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))

    nb = len(edges) + 1
    score = np.zeros(nb)
    score_sq = np.zeros(nb)
    counts = np.zeros(nb, dtype=np.int64)
    track = np.zeros(nb)
    coll = coll_sq = 0
    for sc, sq, cn, tl, cs, cq in parts:  # fixed chunk order
        score += sc
        score_sq += sq
        counts += cn
        track += tl
        coll += int(cs)
        coll_sq += int(cq)
    strength = problem.source.strength
    return RadialTally(edges, score * strength, score_sq * strength**2, counts, n_histories,
                       coll, coll_sq, track * strength if track_length else None,
                       {"master_seed": int(master_seed), "implicit_capture": implicit_capture})


def first_collision_radii(problem: TransportProblem, n_histories: int, master_seed: int) -> np.ndarray:
    """Distance from the source of each history's first collision."""
    kind, param, tab_s, tab_p, tab_cdf = problem.law.kernel_params()
    return _first_radii(kind, param, tab_s, tab_p, tab_cdf, int(master_seed) % 2**64, 0, n_histories)


def transport_history(problem: TransportProblem, master_seed: int, index: int) -> list[float]:
    """Collision radii of one analog history, in plain Python.

    Consumes the same substream in the same order as the compiled kernel, so
    it serves as a slow, readable reference for it.
    """
    stream = CounterStream(master_seed, index)
    p = Particle(np.zeros(3), isotropic_direction(stream))
    law = problem.law
    radii = []
    while p.alive:
        s = float(law.sample(stream))
        p.path_length_since_event += s
        p.position = p.position + s * p.direction
        radii.append(float(np.linalg.norm(p.position)))
        if stream.random() >= problem.c:
            p.alive = False
        else:
            p.direction = isotropic_direction(stream)
            p.path_length_since_event = 0.0
    return radii


def scalar_flux_estimate(tally: RadialTally, mean_free_path: float) -> RadialField:
    """``phi0 = <s> f`` per shell; ``mean_free_path`` picks which ``<s>`` is meant."""
    if not mean_free_path > 0:
        raise DomainError("mean free path must be positive")
    mids = tally.r_mid
    if mids[0] <= 0:
        raise DomainError("shell midpoints must be positive")
    grid = RadialGrid(mids, tally.volumes)
    return RadialField(grid, mean_free_path * tally.estimate, tally.rel_std_err.copy())
