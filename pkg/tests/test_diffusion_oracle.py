import math

import numpy as np
import pytest
from scipy import integrate

from nctransport import diffusion_oracle as oracle
from nctransport.diffusion_oracle import DiffusionParams
from nctransport.pathlen import DomainError, make_diffusion_matched

from conftest import PEBBLE_FIRST


def radial_laplacian(fn, r, h):
    """(1/r) d^2/dr^2 (r f) by the second-order central stencil."""
    u = lambda x: x * fn(x)
    return (u(r + h) - 2 * u(r) + u(r - h)) / (h * h * r)


def test_greens_function_values():
    assert oracle.greens_function(1.0, 1.0) == pytest.approx(0.029274915762159580345, rel=1e-14)
    assert oracle.greens_function(0.0, 1.0) == pytest.approx(0.079577471545947667884, rel=1e-14)
    assert oracle.greens_function(1.0, 800.0) == 0.0


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_radius_must_be_positive(r):
    with pytest.raises(DomainError):
        oracle.greens_function(1.0, r)
    with pytest.raises(DomainError):
        oracle.point_source_collision_density(DiffusionParams(1.0, 6.0, 0.5), 1.0, r)


def test_params_validation():
    with pytest.raises(DomainError):
        DiffusionParams(1.0, 6.0, 1.0)
    with pytest.raises(DomainError):
        DiffusionParams(0.0, 6.0, 0.5)
    p = DiffusionParams(2.0, 6.2898, 0.99)
    assert 0 < p.kappa < p.lam
    assert p.diffusion_coefficient == pytest.approx(6.2898 / 12.0)


def test_collision_density_values():
    p = DiffusionParams(1.0, 6.0, 0.99)
    assert oracle.point_source_collision_density(p, 1.0, 1.0) == pytest.approx(
        0.072004673887465327682, rel=1e-13)
    p0 = DiffusionParams(1.0, 6.2898, 0.0)
    lam = p0.lam
    assert oracle.point_source_collision_density(p0, 1.0, 1.0) == pytest.approx(
        lam**2 * oracle.greens_function(lam, 1.0), rel=1e-15)


@pytest.mark.parametrize("c", [0.0, 0.5, 0.99])
def test_total_collision_rate_by_quadrature(c):
    p = DiffusionParams(PEBBLE_FIRST, 6.2898, c)
    total, _ = integrate.quad(lambda r: 4 * math.pi * r * r * oracle.point_source_collision_density(p, 2.0, r),
                              0, np.inf, epsrel=1e-12)
    assert total == pytest.approx(2.0 / (1 - c), rel=1e-9)
    assert oracle.total_collision_rate(p, 2.0) == pytest.approx(2.0 / (1 - c))


def test_scalar_flux_scaling():
    p1 = DiffusionParams(1.0, 6.0, 0.5)
    r = np.linspace(0.1, 5, 7)
    np.testing.assert_array_equal(oracle.point_source_scalar_flux(p1, 1.0, r),
                                  oracle.point_source_collision_density(p1, 1.0, r))
    pb = DiffusionParams(PEBBLE_FIRST, 6.2898, 0.99)
    assert oracle.point_source_scalar_flux(pb, 1.0, 2.0) == pytest.approx(
        PEBBLE_FIRST * oracle.point_source_collision_density(pb, 1.0, 2.0), rel=1e-15)
    assert oracle.point_source_scalar_flux(pb, 0.0, 2.0) == 0.0


def test_screened_poisson_residual():
    p = DiffusionParams(PEBBLE_FIRST, 6.2898, 0.99)
    fn = lambda x: oracle.point_source_collision_density(p, 1.0, x)
    r = np.linspace(0.5, 10.0, 200)
    residual = -radial_laplacian(fn, r, 1e-3) + p.kappa**2 * fn(r)
    assert np.max(np.abs(residual) / (p.kappa**2 * fn(r))) < 1e-6


def test_greens_identity():
    lam = make_diffusion_matched(6.2898).lam
    fn = lambda x: oracle.greens_function(lam, x)
    r = np.linspace(0.5, 10.0, 200)
    residual = -radial_laplacian(fn, r, 1e-3) + lam**2 * fn(r)
    assert np.max(np.abs(residual) / (lam**2 * fn(r))) < 1e-6


def test_lambda_consistent_with_pathlen():
    for ms2 in (0.3, 6.0, 6.2898, 17.5):
        assert DiffusionParams(1.0, ms2, 0.5).lam == make_diffusion_matched(ms2).lam


def test_shell_average_by_quadrature():
    p = DiffusionParams(1.0, 6.2898, 0.99)
    lo, hi = 2.0, 4.5
    num, _ = integrate.quad(lambda r: 4 * math.pi * r * r * oracle.point_source_collision_density(p, 1.0, r),
                            lo, hi, epsrel=1e-12)
    vol = 4 * math.pi / 3 * (hi**3 - lo**3)
    assert oracle.shell_average_collision_density(p, 1.0, lo, hi) == pytest.approx(num / vol, rel=1e-9)


def test_neumann_series_cross_check():
    """Iterating the Green's-function convolution reproduces the closed form."""
    lam = 1.0
    c = 0.5
    p = DiffusionParams(1.0, 6.0, c)
    # lam^2 G * g for radial g, via the reduced 1-D kernel of exp(-lam|x|)/(4 pi |x|)
    r = np.linspace(1e-3, 40.0, 4001)
    h = r[1] - r[0]

    def convolve(g):
        out = np.empty_like(r)
        rg = r * g
        for i, ri in enumerate(r):
            ker = lam * (np.exp(-lam * np.abs(ri - r)) - np.exp(-lam * (ri + r)))
            out[i] = integrate.trapezoid(rg * ker, dx=h) / (2.0 * ri)
        return out

    first = lam**2 * np.exp(-lam * r) / (4 * math.pi * r)
    total = first.copy()
    term = first
    for _ in range(30):
        term = c * convolve(term)
        total += term
    exact = oracle.point_source_collision_density(p, 1.0, r)
    mask = (r > 0.5) & (r < 10)
    assert np.max(np.abs(total[mask] / exact[mask] - 1)) < 5e-3
