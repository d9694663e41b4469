import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from washboard.errors import ConfigError, DegenerateError, RegimeError, ScaleError
from washboard.potential import (
    CriticalPoints,
    PeriodicPotential,
    barriers,
    cosine,
    find_critical_points,
    from_table,
    g_of_sin,
    g_of_sin_quadratic,
)

TWO_PI = 2.0 * math.pi


def test_cosine_untilted_closed_form():
    pot = cosine()
    cp = find_critical_points(pot, 0.0)
    assert cp.p_min == pytest.approx(0.0, abs=1e-12)
    assert cp.p_max == pytest.approx(math.pi, abs=1e-12)
    kd = barriers(pot, 0.0, cp)
    # barrier = H(pi) - H(0) = 1 - (-1) = 2, prefactor = 1/(2*pi)
    assert kd.h_left == pytest.approx(2.0, abs=1e-12)
    assert kd.h_right == pytest.approx(2.0, abs=1e-12)
    assert kd.prefactor == pytest.approx(1.0 / TWO_PI, abs=1e-14)
    assert kd.tau(0.5) == pytest.approx(math.exp(-8.0) / TWO_PI, rel=1e-12)


def test_cosine_tilted_closed_form():
    sigma = 0.5
    pot = cosine()
    cp = find_critical_points(pot, sigma)
    p0 = math.asin(sigma)
    q0 = math.pi - p0
    assert cp.p_min == pytest.approx(p0, abs=1e-12)
    assert cp.p_max == pytest.approx(q0, abs=1e-12)
    kd = barriers(pot, sigma, cp)
    h_right = 2.0 * math.sqrt(1.0 - sigma**2) - sigma * (math.pi - 2.0 * math.asin(sigma))
    assert h_right == pytest.approx(0.6848532563722795, abs=1e-12)
    assert kd.h_right == pytest.approx(h_right, abs=1e-9)
    assert kd.h_left - kd.h_right == pytest.approx(sigma * TWO_PI, abs=1e-9)
    assert kd.prefactor == pytest.approx(math.cos(p0) / TWO_PI, rel=1e-12)
    assert kd.tau(0.5) == pytest.approx(kd.prefactor * math.exp(-h_right / 0.25), rel=1e-9)


def test_critical_points_match_independent_root_finder():
    pot = g_of_sin_quadratic(1.0, 0.4)
    sigma = 0.3
    cp = find_critical_points(pot, sigma)

    def f(p):
        return float(pot.d1(p)) - sigma

    # independent oracle: bracketed Brent on each branch of H' - sigma
    r1 = brentq(f, 0.0, math.pi / 2 + 0.5, xtol=1e-14)
    r2 = brentq(f, math.pi / 2 + 0.5, TWO_PI - 0.5, xtol=1e-14)
    lo, hi = sorted([r1, r2])
    expected_min = lo if float(pot.d2(lo)) > 0 else hi
    expected_max = hi if float(pot.d2(hi)) < 0 else lo
    assert cp.p_min == pytest.approx(expected_min, abs=1e-11)
    assert cp.p_max % TWO_PI == pytest.approx(expected_max, abs=1e-11)
    assert cp.p_min < cp.p_max < cp.p_min + TWO_PI
    assert float(pot.d1(cp.p_min)) == pytest.approx(sigma, abs=1e-12)
    assert float(pot.d1(cp.p_max)) == pytest.approx(sigma, abs=1e-12)


def test_slope_range_of_gsin_matches_cosine():
    # G = identity gives H = sin(p) whose slope cos(p) spans [-1, 1]
    one = lambda y: np.ones_like(np.asarray(y, dtype=float))
    zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    pot = g_of_sin(g=lambda y: np.asarray(y, dtype=float), dg=one, d2g=zero, d3g=zero)
    assert pot.sigma_min == pytest.approx(-1.0, abs=1e-10)
    assert pot.sigma_max == pytest.approx(1.0, abs=1e-10)
    assert pot.zeta == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(
    a=st.floats(0.5, 2.0),
    b=st.floats(-0.4, 0.4),
    frac=st.floats(0.05, 0.95),
)
def test_barrier_difference_equals_tilt_times_period(a, b, frac):
    pot = g_of_sin_quadratic(a, max(min(b, 0.8 * a), -0.8 * a))
    sigma = pot.sigma_min + frac * (pot.sigma_max - pot.sigma_min)
    cp = find_critical_points(pot, sigma)
    kd = barriers(pot, sigma, cp)
    assert kd.h_left - kd.h_right == pytest.approx(sigma * pot.period, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(shift=st.floats(-40.0, 40.0))
def test_kramers_scale_invariant_under_constant_offset(shift):
    base = cosine()
    lifted = PeriodicPotential(
        evaluate=lambda p: -np.cos(p) + shift,
        d1=base.d1, d2=base.d2, d3=base.d3,
        period=base.period, sigma_min=base.sigma_min,
        sigma_max=base.sigma_max, zeta=base.zeta,
    )
    for sigma in (0.0, 0.3):
        cp0 = find_critical_points(base, sigma)
        cp1 = find_critical_points(lifted, sigma)
        kd0 = barriers(base, sigma, cp0)
        kd1 = barriers(lifted, sigma, cp1)
        assert kd1.h_left == pytest.approx(kd0.h_left, abs=1e-10)
        assert kd1.h_right == pytest.approx(kd0.h_right, abs=1e-10)
        assert kd1.prefactor == pytest.approx(kd0.prefactor, rel=1e-12)
        assert kd1.tau(0.4) == pytest.approx(kd0.tau(0.4), rel=1e-10)


def test_periodicity_of_evaluators():
    pot = g_of_sin_quadratic(1.2, 0.5)
    p = np.random.default_rng(3).uniform(-20.0, 20.0, 1000)
    for f in (pot.evaluate, pot.d1, pot.d2, pot.d3):
        v0 = np.asarray(f(p), dtype=float)
        v1 = np.asarray(f(p + pot.period), dtype=float)
        scale = max(1.0, float(np.max(np.abs(v0))))
        assert np.max(np.abs(v1 - v0)) <= 1e-12 * scale


def test_table_potential_reproduces_cosine():
    p = np.linspace(0.0, TWO_PI, 181)
    pot = from_table(p, -np.cos(p))
    q = np.linspace(-5.0, 15.0, 400)
    assert np.max(np.abs(pot.evaluate(q) + np.cos(q))) < 1e-9
    assert np.max(np.abs(pot.d1(q) - np.sin(q))) < 1e-7
    assert np.max(np.abs(pot.d2(q) - np.cos(q))) < 1e-5
    assert np.max(np.abs(pot.d3(q) + np.sin(q))) < 1e-3
    assert pot.sigma_max == pytest.approx(1.0, abs=1e-6)
    cp = find_critical_points(pot, 0.25)
    assert cp.p_min == pytest.approx(math.asin(0.25), abs=1e-6)


def test_table_rejects_open_period():
    p = np.linspace(0.0, TWO_PI, 60)
    vals = -np.cos(p) + 1e-3 * p  # not periodic
    with pytest.raises(ConfigError):
        from_table(p, vals)


def test_tau_monotone_in_nu_and_scale_floor():
    pot = cosine()
    cp = find_critical_points(pot, 0.0)
    kd = barriers(pot, 0.0, cp)
    nus = [0.2, 0.3, 0.4, 0.5, 0.7]
    taus = [kd.tau(nu) for nu in nus]
    assert all(t1 > t0 for t0, t1 in zip(taus, taus[1:]))
    # barrier 2 with nu = 0.05 pushes the exponent past the double floor
    with pytest.raises(ScaleError):
        kd.tau(0.05)
    assert kd.log_tau(0.05) == pytest.approx(math.log(kd.prefactor) - 800.0, rel=1e-12)


def test_regime_error_outside_band():
    pot = cosine()
    for sigma in (-1.5, -1.0, 1.0, 1.0 - 1e-10, 2.0):
        with pytest.raises(RegimeError):
            find_critical_points(pot, sigma)


def test_degenerate_error_for_double_humped_slope():
    # H' = sin(p) - 1.6*sin(2p) has four sign changes per period at sigma=0
    pot = PeriodicPotential(
        evaluate=lambda p: -np.cos(p) + 0.8 * np.cos(2.0 * p),
        d1=lambda p: np.sin(p) - 1.6 * np.sin(2.0 * p),
        d2=lambda p: np.cos(p) - 3.2 * np.cos(2.0 * p),
        d3=lambda p: -np.sin(p) + 6.4 * np.sin(2.0 * p),
        period=TWO_PI, sigma_min=-2.0, sigma_max=2.0, zeta=7.4,
    )
    with pytest.raises(DegenerateError):
        find_critical_points(pot, 0.0)
    with pytest.raises(DegenerateError):
        pot.validate()


def test_gsin_rejects_nonmonotone_g():
    with pytest.raises(ConfigError):
        g_of_sin_quadratic(0.5, 0.8)


def test_critical_point_translation():
    pot = g_of_sin_quadratic(1.0, 0.3)
    cp = find_critical_points(pot, 0.2)
    js = np.arange(-3, 4)
    assert np.allclose(cp.minimum(js), cp.p_min + js * pot.period, atol=0)
    assert np.allclose(cp.maximum(js), cp.p_max + js * pot.period, atol=0)
