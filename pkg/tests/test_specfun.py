import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from kepdiff import (ConfigError, NodeError, PhysParams,
                     complex_velocity, complex_velocity_finite, elliptic_e,
                     hermite, hermite_ratio, laguerre, laguerre_ratio,
                     log_amplitude, log_wave, wave_gradients)

from conftest import random_points


# ---------------------------------------------------------------------------
# polynomial recurrences and scaling
# ---------------------------------------------------------------------------

def _laguerre_direct(n, z):
    """Unscaled recurrence, test oracle for the rescaling machinery."""
    L0, L1 = 1.0 + 0j, 1.0 - z
    D0, D1 = 0.0 + 0j, -1.0 + 0j
    if n == 0:
        return L0, D0
    for k in range(1, n):
        L0, L1 = L1, ((2 * k + 1 - z) * L1 - k * L0) / (k + 1)
        D0, D1 = D1, ((2 * k + 1 - z) * D1 - L0 - k * D0) / (k + 1)
    return L1, D1


def _hermite_direct(m, z):
    H0, H1 = 1.0 + 0j, 2 * z
    if m == 0:
        return H0, 0.0 + 0j
    for k in range(1, m):
        H0, H1 = H1, 2 * z * H1 - 2 * k * H0
    return H1, 2 * m * H0


def test_laguerre_base_cases():
    for z in (0.3, 2.0 + 1.5j, -4.0):
        assert laguerre(0, z).value == 1.0
        assert laguerre(1, z).value == pytest.approx(1 - z)
    assert laguerre(2, 1.0).value == pytest.approx(-0.5)


def test_laguerre_negative_degree_raises():
    with pytest.raises(ConfigError):
        laguerre(-1, 0.0)


def test_laguerre_scaling_matches_direct():
    # large negative argument: the recurrence crosses the 2**512 rescale
    # threshold well before the direct values overflow
    pe = laguerre(1000, -50.0 + 3.0j)
    assert pe.overflow_scaled and pe.exponent > 0
    v, d = pe.unscaled()
    assert np.isfinite(abs(v)) and np.isfinite(abs(d))
    v0, d0 = _laguerre_direct(1000, -50.0 + 3.0j)
    assert abs(v - v0) / abs(v0) < 1e-12
    assert abs(d - d0) / abs(d0) < 1e-12


def test_hermite_base_cases():
    for z in (0.7, 1.0 - 2.0j):
        assert hermite(0, z).value == 1.0
        assert hermite(1, z).value == pytest.approx(2 * z)
    assert hermite(2, 1.0).value == pytest.approx(2.0)


def test_hermite_scaling_matches_direct():
    pe = hermite(100, 50.0)
    assert pe.overflow_scaled
    v, d = pe.unscaled()
    v0, d0 = _hermite_direct(100, 50.0)
    assert abs(v - v0) / abs(v0) < 1e-12
    assert abs(d - d0) / abs(d0) < 1e-12


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 50),
       re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_hermite_recurrence_identity(m, re, im):
    z = complex(re, im)
    hm1 = hermite(m - 1, z).value
    hm = hermite(m, z).value
    hp = hermite(m + 1, z).value
    assert abs(hp + 2 * m * hm1 - 2 * z * hm) <= 1e-9 * max(
        1.0, abs(hp), abs(2 * z * hm))


# ---------------------------------------------------------------------------
# scaled Hermite ratio
# ---------------------------------------------------------------------------

def test_hermite_ratio_degree_zero():
    for nu in (3.0, 8.0, 1.0 + 1.0j):
        assert hermite_ratio(0, nu) == 0.0


@pytest.mark.parametrize("nu,limit", [
    (8.0, 1 - math.sqrt(0.5)),          # ~0.2928932
    (100.0, 1 - math.sqrt(0.96)),       # ~0.0202041
])
def test_hermite_ratio_limit(nu, limit):
    q = hermite_ratio(2 * 2000, nu) / cmath.sqrt(nu / 2)
    assert abs(q - limit) < 1e-3


def test_hermite_ratio_error_decreasing():
    for nu in (6.0, 8.0, 20.0, 100.0):
        limit = 1 - math.sqrt(1 - 4 / nu)
        errs = [abs(hermite_ratio(2 * n, nu) / cmath.sqrt(nu / 2) - limit)
                for n in (50, 200, 800, 2000)]
        assert all(b < a for a, b in zip(errs, errs[1:]))


# ---------------------------------------------------------------------------
# finite-degree complex velocity
# ---------------------------------------------------------------------------

def test_finite_velocity_degree_one(p):
    # degree-zero polynomial: the ratio term vanishes
    pt = np.array([0.8, 0.6, -0.4])
    z = complex_velocity_finite(p, 1, pt)
    expect = 1j * p.mu / p.lam * pt / np.linalg.norm(pt)
    np.testing.assert_allclose(z, expect, atol=1e-14)


def test_finite_velocity_plane_component(p):
    pts = random_points(20, seed=31)
    pts[:, 2] = 0.0
    for n in (1, 7, 40):
        z = complex_velocity_finite(p, n, pts)
        assert np.max(np.abs(z[:, 2])) == 0.0


def test_finite_velocity_converges(p):
    pt = np.array([-1.5, 0.0, 0.0])
    zl = complex_velocity(p, pt)
    errs = [np.linalg.norm(complex_velocity_finite(p, n, pt) - zl)
            for n in (10, 50, 250, 1250)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_finite_velocity_node_error(p):
    # nu = 1/2 at x = -1/6 puts the degree-1 polynomial at its zero
    with pytest.raises(NodeError):
        complex_velocity_finite(p, 2, [-1.0 / 6.0, 0.0, 0.0])


def test_laguerre_ratio_limit(p):
    rho = laguerre_ratio(499, 500 * 4.5)
    assert abs(rho - (1 - math.sqrt(1 - 4 / 4.5)) / 2) < 5e-3


# ---------------------------------------------------------------------------
# limiting wave function
# ---------------------------------------------------------------------------

def test_log_amplitude_constant_on_ellipse():
    from kepdiff import ellipse_point
    for e in (0.3, 0.5, 0.8):
        for eps in (0.3, 1.0):
            pp = PhysParams(ecc=e, eps=eps)
            target = pp.lam / (2 * eps ** 2) * math.log(16 / e ** 2)
            vs = np.linspace(0, 2 * np.pi, 37)
            vals = log_amplitude(pp, ellipse_point(pp, vs))
            np.testing.assert_allclose(vals, target, rtol=1e-12)


def test_log_amplitude_showcase_value(p_unit):
    val = log_amplitude(p_unit, [0.5, 0.0, 0.0])
    assert val == pytest.approx(0.5 * math.log(64), rel=1e-13)  # ~2.0794


def test_log_wave_gradient_reconstructs_velocity(p):
    # grad log psi = grad R + i grad S = i Z / eps^2 (finite differences)
    pts = random_points(100, seed=37, min_y=0.2)
    h = 1e-6
    for pt in pts[:25]:
        g = np.zeros(3, complex)
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            g[k] = (log_wave(p, pt + dp) - log_wave(p, pt - dp)) / (2 * h)
        z = complex_velocity(p, pt)
        np.testing.assert_allclose(g, 1j * z / p.eps ** 2,
                                   rtol=1e-6, atol=1e-5)


def test_log_wave_gradients_match_closed_form(p):
    pts = random_points(10, seed=41, min_y=0.2)
    h = 1e-6
    for pt in pts:
        gr, gs = wave_gradients(p, pt)
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            fd = (log_wave(p, pt + dp) - log_wave(p, pt - dp)) / (2 * h)
            assert fd.real == pytest.approx(gr[k], rel=1e-6, abs=1e-5)
            assert fd.imag == pytest.approx(gs[k], rel=1e-6, abs=1e-5)


# ---------------------------------------------------------------------------
# complete elliptic integral (parameter convention)
# ---------------------------------------------------------------------------

def _E_quad(m):
    return quad(lambda t: math.sqrt(1 - m * math.sin(t) ** 2),
                0.0, math.pi / 2, epsabs=1e-13, epsrel=1e-13)[0]


def test_elliptic_e_trivial_values():
    assert elliptic_e(0.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert elliptic_e(1.0) == 1.0


def test_elliptic_e_against_quadrature():
    assert elliptic_e(0.5) == pytest.approx(1.3506438810476755, abs=1e-12)
    for m in (0.12, 0.5, 0.64, 0.97, -0.4, -16.0 / 9.0, -9.0):
        assert elliptic_e(m) == pytest.approx(_E_quad(m), abs=1e-12)


def test_elliptic_e_domain_error():
    with pytest.raises(ConfigError):
        elliptic_e(1.0001)
