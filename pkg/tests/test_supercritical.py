"""Ballistic regime: effective velocity, periodic corrector, drift runs.

Frozen values come from 40-digit quadrature (mpmath) of the closed-form
velocity integral and of the variation-of-constants corrector, plus an
independent ODE integration for the zero-noise traversal time.
"""
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from washboard.errors import (
    ConfigError,
    QuadratureError,
    RegimeError,
    SingularIntegralError,
)
from washboard.potential import PeriodicPotential, cosine, g_of_sin_quadratic
from washboard.supercritical import (
    ballistic_check,
    ballistic_weight,
    effective_velocity,
)

SQRT24 = 4.8989794855663562  # sqrt(5^2 - 1), 40-digit quadrature agrees


@pytest.fixture(scope="module")
def cos_pot():
    return cosine()


def test_velocity_closed_form(cos_pot):
    assert abs(effective_velocity(cos_pot, 1.25) - 0.75) <= 1e-12
    assert abs(effective_velocity(cos_pot, 5.0) / SQRT24 - 1.0) <= 1e-12
    # descending orientation: same magnitude, opposite sign
    assert abs(effective_velocity(cos_pot, 1.25, positive=False) + 0.75) <= 1e-12


def test_velocity_large_tilt_approaches_drift(cos_pot):
    ratio = effective_velocity(cos_pot, 100.0) / 100.0 - 1.0
    assert abs(ratio) <= 1e-3
    assert ratio < 0.0  # harmonic mean sits below the plain average


def test_velocity_asymmetric_member():
    """lambda for H = sin p + 0.25 sin^2 p at sigma = 1.5, frozen from
    independent 40-digit quadrature."""
    pot = g_of_sin_quadratic(1.0, 0.5)
    assert abs(effective_velocity(pot, 1.5) / 1.0651644730376341 - 1.0) <= 1e-9


def test_velocity_invariances():
    shifted = PeriodicPotential(
        evaluate=lambda p: -np.cos(p + 0.7) + 3.0,
        d1=lambda p: np.sin(p + 0.7),
        d2=lambda p: np.cos(p + 0.7),
        d3=lambda p: -np.sin(p + 0.7),
        period=2.0 * math.pi, sigma_min=-1.0, sigma_max=1.0, zeta=1.0)
    assert abs(effective_velocity(shifted, 1.25) - 0.75) <= 1e-10


def test_regime_guards(cos_pot):
    with pytest.raises(RegimeError):
        effective_velocity(cos_pot, 0.9)
    with pytest.raises(RegimeError):
        effective_velocity(cos_pot, 1.0)  # exactly at the threshold
    with pytest.raises(SingularIntegralError):
        effective_velocity(cos_pot, 1.0 + 1e-9)
    with pytest.raises(ConfigError):
        ballistic_weight(cos_pot, 1.25, -0.1)
    with pytest.raises(ConfigError):
        ballistic_weight(cos_pot, 1.25, 0.2, n_nodes=16)
    with pytest.raises(ConfigError):
        ballistic_check(cos_pot, 1.25, 0.1, -1.0)
    with pytest.raises(ConfigError):
        ballistic_check(cos_pot, 1.25, 0.1, 1.0, n_cells=8)
    with pytest.raises(ConfigError):
        ballistic_check(cos_pot, 1.25, 0.1, 1.0, theta=0.2)


def test_corrector_matches_independent_quadrature(cos_pot):
    """psi' spot values at sigma = 1.25, frozen from mpmath."""
    res = ballistic_weight(cos_pot, 1.25, 0.2)
    frozen = {
        0.0: 0.78093608972540477,
        0.5 * math.pi: 3.7469047193709515,
        math.pi: 0.82226846336818623,
        1.5 * math.pi: 0.44450694211083131,
        0.3: 1.0080124853072303,
    }
    for p, ref in frozen.items():
        assert abs(float(res.psi_prime(p)) / ref - 1.0) <= 1e-11
    assert abs(res.c / frozen[0.0] - 1.0) <= 1e-12
    assert abs(res.mean_slope / 1.3238903747135004 - 1.0) <= 1e-12
    fine = ballistic_weight(cos_pot, 1.25, 0.1)
    assert abs(fine.c / 0.79497559039339685 - 1.0) <= 1e-12
    assert abs(float(fine.psi_prime(0.5 * math.pi)) / 3.9758445468368483
               - 1.0) <= 1e-11
    assert abs(fine.mean_slope / 1.3326621986739014 - 1.0) <= 1e-12


def test_corrector_periodic_and_positive(cos_pot):
    res = ballistic_weight(cos_pot, 1.25, 0.1)
    assert res.periodicity_residual <= 1e-9
    assert res.c > 0.0
    dense = np.linspace(0.0, res.period, 20001)
    w = res.psi_prime(dense)
    assert np.all(w > 0.0)
    # wrap-around evaluation agrees with the principal cell
    assert abs(float(res.psi_prime(res.period + 0.3))
               - float(res.psi_prime(0.3))) <= 1e-13


def test_corrector_expansion_order(cos_pot):
    """sup|psi' - u0 - nu^2 u1| shrinks like nu^4; the prefactor saturates
    near 255 (measured 195/249/255 over the three nu), capped at 280."""
    dense = np.linspace(0.0, 2.0 * math.pi, 20001)
    sups = {}
    for nu in (0.2, 0.1, 0.05):
        res = ballistic_weight(cos_pot, 1.25, nu)
        diff = res.psi_prime(dense) - res.u0(dense) - nu**2 * res.u1(dense)
        sups[nu] = float(np.max(np.abs(diff)))
        assert sups[nu] <= 280.0 * nu**4
    assert 10.0 <= sups[0.2] / sups[0.1] <= 17.0
    assert 13.0 <= sups[0.1] / sups[0.05] <= 17.0


def test_corrector_mean_approaches_inverse_velocity(cos_pot):
    """The period mean of psi' tends to 1/lambda; for this cell the nu^2
    coefficient integrates to zero, so the gap is quartic (measured
    prefactors 5.9/6.7/6.8)."""
    errs = []
    for nu in (0.2, 0.1, 0.05):
        res = ballistic_weight(cos_pot, 1.25, nu)
        gap = abs(res.mean_slope - 1.0 / res.velocity)
        assert gap <= 8.0 * nu**4
        errs.append(gap)
    assert errs[0] > errs[1] > errs[2]


def test_corrector_antiderivative_bounded(cos_pot):
    res = ballistic_weight(cos_pot, 1.25, 0.1)
    big_l = res.period
    assert float(res.psi(0.0)) == 0.0
    assert abs(float(res.psi(big_l)) - big_l * res.mean_slope) <= 1e-12
    p = np.linspace(0.0, 10.0 * big_l, 40001)
    dev = res.psi(p) - p * res.mean_slope
    assert float(np.max(np.abs(dev))) <= 3.0  # measured sup 2.62


def test_zero_noise_traversal_time(cos_pot):
    """Deterministic limit: time to cross one period solves
    dp/dt = sigma - H'(p), equal to L/lambda."""
    lam = effective_velocity(cos_pot, 1.25)
    sol = solve_ivp(lambda t, p: 1.25 - np.sin(p), (0.0, 30.0), [0.0],
                    rtol=1e-10, atol=1e-12,
                    events=lambda t, p: p[0] - 2.0 * math.pi)
    t_cross = float(sol.t_events[0][0])
    assert abs(t_cross / (2.0 * math.pi / lam) - 1.0) <= 1e-8


def test_drift_run_matches_velocity(cos_pot):
    chk = ballistic_check(cos_pot, 1.25, 0.1, 20.0)
    assert chk.rel_err <= 0.02  # measured 2.6e-3
    assert chk.mass_drift <= 1e-10
    assert chk.windings[-1] > 2.0
    assert np.all(np.diff(chk.positions) > 0.0)
    assert abs(chk.lambda_quadrature - 0.75) <= 1e-12


def test_drift_run_fast_tilt(cos_pot):
    chk = ballistic_check(cos_pot, 5.0, 0.1, 10.0)
    assert abs(chk.lambda_quadrature / SQRT24 - 1.0) <= 1e-12
    assert chk.rel_err <= 0.02  # measured 2.0e-4
    assert chk.windings[-1] > 7.0
