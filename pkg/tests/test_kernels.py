import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from fraclayer import DomainError, FracOrder, extension_constant, kernel_constants, pv_constant
from fraclayer.kernels import (
    fundamental_constant,
    fundamental_solution,
    neumann_flux,
    poisson_kernel,
    poisson_normalizer,
    poisson_profile,
    pv_constant_forms,
)

S_OPEN = st.floats(min_value=0.02, max_value=0.98)


def kernel_mass(order: FracOrder, y: float) -> float:
    """Quadrature on |x| <= 100 y plus the exact power-law tail (incomplete beta)."""
    X = 100.0 * y
    q = (1 + 2 * order.s) / 2
    body, _ = integrate.quad(lambda x: poisson_kernel(order, x, y), 0.0, X, epsabs=0.0, epsrel=1e-13, limit=400,
                             points=[y])
    t0 = y * y / (X * X + y * y)
    a, b = q - 0.5, 0.5
    tail = 0.5 * y ** (1 - 2 * q) * special.betainc(a, b, t0) * special.beta(a, b)
    return 2.0 * (body + poisson_normalizer(1, order.s) * y ** (2 * order.s) * tail)


# ---------------------------------------------------------------- FracOrder


@given(S_OPEN, st.integers(min_value=1, max_value=4))
def test_order_weight_exponent(s, n):
    order = FracOrder(s, n)
    assert order.a == 1.0 - 2.0 * s
    assert -1.0 < order.a < 1.0


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_order_rejects_closed_interval(s):
    with pytest.raises(DomainError):
        FracOrder(s)


def test_order_rejects_bad_dimension():
    with pytest.raises(DomainError):
        FracOrder(0.5, 0)


# ---------------------------------------------------------------- constants


def test_pv_constant_half_line():
    oracle = float(mpmath.pi ** -0.5 * 2 * mpmath.gamma(1) * 0.25 / mpmath.gamma(1.5))
    assert pv_constant(1, 0.5) == pytest.approx(oracle, rel=1e-14)
    assert pv_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)


def test_pv_constant_plane():
    assert pv_constant(2, 0.5) == pytest.approx(1 / (2 * math.pi), rel=1e-14)


@given(S_OPEN, st.integers(min_value=1, max_value=3))
def test_pv_constant_matches_mpmath(s, n):
    mp = mpmath.mpf
    oracle = mpmath.pi ** (-mp(n) / 2) * 2 ** (2 * mp(s)) * mpmath.gamma((n + 2 * mp(s)) / 2) * mp(s) * (1 - mp(s))
    oracle /= mpmath.gamma(2 - mp(s))
    assert pv_constant(n, s) == pytest.approx(float(oracle), rel=1e-12)


@given(S_OPEN, st.integers(min_value=1, max_value=3))
def test_pv_constant_forms_agree(s, n):
    f0, f1, f2 = pv_constant_forms(n, s)
    assert f0 == pytest.approx(f2, rel=1e-12)
    assert f1 == pytest.approx(f2, rel=1e-12)


def test_pv_constant_vanishes_like_one_minus_s():
    # C_{1,s}/(1-s) -> pi^{-1/2} 4 Gamma(3/2) = 2
    ratios = [pv_constant(1, 1 - e) / e for e in (1e-2, 1e-3, 1e-4)]
    assert all(r > 0 for r in ratios)
    assert abs(ratios[-1] - 2.0) < abs(ratios[0] - 2.0)
    assert ratios[-1] == pytest.approx(2.0, rel=1e-3)


def test_extension_constant_half():
    assert extension_constant(0.5) == pytest.approx(1.0, abs=1e-12)


def test_extension_constant_small_s():
    assert extension_constant(0.05) * 2 * 0.05 == pytest.approx(1.0, rel=2e-2)


# the exact value is 2^{-0.1} Gamma(0.95)/Gamma(1.05) = 0.98857: 1.14% from 1
@pytest.mark.xfail(strict=True, reason="d_s/(2(1-s)) = 0.98857 at s = 0.95; the 1% band is not met by the exact constant")
def test_extension_constant_near_one_within_one_percent():
    assert extension_constant(0.95) / (2 * (1 - 0.95)) == pytest.approx(1.0, rel=1e-2)


def test_extension_constant_limits_converge():
    up = [extension_constant(1 - e) / (2 * e) for e in (0.05, 0.01, 0.001)]
    down = [extension_constant(e) * 2 * e for e in (0.05, 0.01, 0.001)]
    for seq in (up, down):
        gaps = [abs(r - 1) for r in seq]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 2e-3
    oracle = 2 ** mpmath.mpf(-0.1) * mpmath.gamma(0.95) / mpmath.gamma(1.05)
    assert up[0] == pytest.approx(float(oracle), rel=1e-12)


@given(S_OPEN)
def test_extension_constant_matches_mpmath(s):
    oracle = 2 ** (2 * mpmath.mpf(s) - 1) * mpmath.gamma(s) / mpmath.gamma(1 - mpmath.mpf(s))
    assert extension_constant(s) == pytest.approx(float(oracle), rel=1e-12)


@pytest.mark.parametrize("s", np.linspace(0.05, 0.95, 20))
@pytest.mark.parametrize("n", [1, 2, 3])
def test_constants_positive(s, n):
    kc = kernel_constants(n, float(s))
    assert kc.c_ns > 0 and kc.d_s > 0 and kc.p_ns > 0
    if n > 2 * s:
        assert kc.e_ns > 0


@pytest.mark.parametrize("bad", [(0, 0.5), (1, 0.0), (1, 1.0)])
def test_constants_domain_errors(bad):
    n, s = bad
    with pytest.raises(DomainError):
        pv_constant(n, s)


# ---------------------------------------------------------------- Poisson kernel


def test_poisson_normalizer_values():
    assert poisson_normalizer(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)
    # radial quadrature: 2 pi int_0^inf r (1+r^2)^{-3/2} dr
    radial, _ = integrate.quad(lambda r: 2 * math.pi * r * (1 + r * r) ** -1.5, 0, np.inf, epsabs=0, epsrel=1e-13)
    assert poisson_normalizer(2, 0.5) * radial == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("s", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_poisson_normalizer_definition(s):
    q = (1 + 2 * s) / 2
    total, _ = integrate.quad(lambda t: (1 + t * t) ** -q, -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=400)
    assert poisson_normalizer(1, s) * total == pytest.approx(1.0, abs=1e-10)


def test_poisson_kernel_classical_half_plane():
    order = FracOrder(0.5)
    x = np.linspace(-5, 5, 41)
    for y in (0.1, 1.0, 3.0):
        np.testing.assert_allclose(poisson_kernel(order, x, y), y / (math.pi * (x * x + y * y)), rtol=1e-14)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("y", [0.1, 1.0, 10.0])
def test_poisson_kernel_mass(s, y):
    assert abs(kernel_mass(FracOrder(s), y) - 1.0) <= 1e-8


@given(S_OPEN, st.floats(-50, 50), st.floats(1e-3, 50))
def test_poisson_kernel_even_and_scaled(s, x, y):
    order = FracOrder(s)
    p = poisson_kernel(order, x, y)
    assert p > 0
    assert p == poisson_kernel(order, -x, y)
    assert p == pytest.approx(y**-1 * poisson_profile(order, x / y), rel=1e-12)


def test_poisson_kernel_rejects_boundary():
    with pytest.raises(DomainError):
        poisson_kernel(FracOrder(0.5), 0.0, 0.0)


def test_poisson_kernel_plane():
    order = FracOrder(0.5, 2)
    pts = np.array([[0.3, -0.4], [1.0, 2.0]])
    expected = (1 / (2 * math.pi)) * 1.0 / (np.sum(pts**2, axis=1) + 1.0) ** 1.5
    np.testing.assert_allclose(poisson_kernel(order, pts, 1.0), expected, rtol=1e-14)
    with pytest.raises(DomainError):
        poisson_kernel(order, np.array([1.0, 2.0, 3.0]), 1.0)


# ---------------------------------------------------------------- fundamental solution


@given(st.floats(0.05, 0.45), st.floats(-10, 10), st.floats(0.01, 10))
def test_fundamental_solution_homogeneous(s, x, y):
    order = FracOrder(s)
    g1 = fundamental_solution(order, x, y)
    g2 = fundamental_solution(order, 2 * x, 2 * y)
    assert g2 == pytest.approx(2 ** (2 * s - 1) * g1, rel=1e-12)


def test_fundamental_solution_quarter_power():
    order = FracOrder(0.25)
    e = fundamental_constant(1, 0.25)
    for x, y in ((1.0, 0.0), (0.3, 0.4), (2.0, 5.0)):
        assert fundamental_solution(order, x, y) == pytest.approx(e * math.hypot(x, y) ** -0.5, rel=1e-14)


def test_fundamental_solution_errors():
    with pytest.raises(DomainError):
        fundamental_solution(FracOrder(0.25), 0.0, 0.0)
    with pytest.raises(DomainError):
        fundamental_solution(FracOrder(0.25), 1.0, -1.0)
    with pytest.raises(DomainError):
        fundamental_constant(1, 0.75)


def _half_circle_flux(s: float, r: float) -> float:
    """Flux of y^a grad Gamma through the upper half-circle of radius r (n = 1)."""
    a = 1 - 2 * s
    e = fundamental_constant(1, s)
    p = 2 * s - 1
    # y^a d_rho Gamma r dtheta with y = r sin(theta)
    val, _ = integrate.quad(lambda t: (r * math.sin(t)) ** a * e * p * r ** (p - 1) * r, 0, math.pi,
                            epsabs=0, epsrel=1e-12, limit=200)
    return val


@pytest.mark.parametrize("s", [0.1, 0.25, 0.4])
def test_fundamental_flux_radius_independent(s):
    fluxes = [_half_circle_flux(s, r) for r in (0.25, 1.0, 4.0)]
    assert max(fluxes) - min(fluxes) <= 1e-6 * abs(fluxes[1])
    assert fluxes[1] == pytest.approx(-1.0, rel=1e-6)


@pytest.mark.parametrize("s", [0.1, 0.25, 0.4])
def test_neumann_flux_unit_mass_line(s):
    order = FracOrder(s)
    for y in (1e-2, 1.0):
        mass, _ = integrate.quad(lambda x: neumann_flux(order, x, y), -np.inf, np.inf, epsabs=0, epsrel=1e-10,
                                 limit=400)
        assert mass == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_neumann_flux_unit_mass_plane(s):
    order = FracOrder(s, 2)
    mass, _ = integrate.quad(lambda r: 2 * math.pi * r * neumann_flux(order, np.array([r, 0.0]), 1.0), 0, np.inf,
                             epsabs=0, epsrel=1e-10, limit=400)
    assert mass == pytest.approx(1.0, abs=1e-6)
