import math

import numpy as np
import pytest
from scipy.integrate import quad

from washboard.asymptotics import (
    GibbsEvaluator,
    barrier_resistance_log,
    compute_scalars,
    laplace_log_eta0,
    laplace_log_mu0,
    local_equilibrium,
    well_mass_log,
)
from washboard.errors import QuadratureError, ScaleError
from washboard.potential import cosine, find_critical_points, g_of_sin_quadratic
from washboard.quadrature import adaptive_gl, log_integral, refine_panels


def scipy_log_integral(log_f, a, b):
    """Independent oracle: shifted scipy.quad of an exp-integrand."""
    xs = np.linspace(a, b, 2001)
    shift = float(np.max(log_f(xs)))
    val, err = quad(lambda x: math.exp(float(log_f(np.array([x]))[0]) - shift),
                    a, b, limit=200, epsabs=0.0, epsrel=1e-11)
    assert err < 1e-9 * abs(val)
    return shift + math.log(val)


@pytest.mark.parametrize("pot_sigma_nu", [
    (cosine(), 0.5, 0.5),
    (cosine(), 0.0, 0.35),
    (g_of_sin_quadratic(1.0, 0.4), -0.2, 0.45),
])
def test_well_mass_and_resistance_match_scipy_oracle(pot_sigma_nu):
    pot, sigma, nu = pot_sigma_nu
    cp = find_critical_points(pot, sigma)
    gibbs = GibbsEvaluator(pot, sigma, nu)
    log_mu0 = well_mass_log(gibbs, cp)
    log_eta0 = barrier_resistance_log(gibbs, cp)
    oracle_mu = scipy_log_integral(gibbs.log_gamma, float(cp.maximum(-1)), float(cp.maximum(0)))
    oracle_eta = scipy_log_integral(gibbs.log_inv_gamma, float(cp.minimum(0)), float(cp.minimum(1)))
    assert log_mu0 == pytest.approx(oracle_mu, abs=1e-9)
    assert log_eta0 == pytest.approx(oracle_eta, abs=1e-9)


def test_well_mass_translation_identity():
    # gamma(p + L) = gamma(p) * exp(sigma*L/nu^2) exactly, so direct
    # quadrature of mu_j must reproduce the kappa^{-j} ladder.
    pot = g_of_sin_quadratic(1.0, 0.3)
    sigma, nu = 0.35, 0.4
    cp = find_critical_points(pot, sigma)
    gibbs = GibbsEvaluator(pot, sigma, nu)
    sc = compute_scalars(pot, sigma, nu)
    for j in (-2, 1, 3):
        assert well_mass_log(gibbs, cp, j) == pytest.approx(sc.log_mu(j), abs=1e-9)
        assert barrier_resistance_log(gibbs, cp, j) == pytest.approx(sc.log_eta(j), abs=1e-9)
    # the accessor ladder itself is exact by construction
    assert sc.log_mu(5) == sc.log_mu0 - 5 * sc.log_kappa
    assert sc.log_eta(5) == sc.log_eta0 + 5 * sc.log_kappa


@pytest.mark.parametrize("sigma,nus", [
    (0.0, [0.25, 0.3, 0.4, 0.5]),
    # the tilted well needs smaller nu before the nu^2 law dominates
    (0.5, [0.12, 0.15, 0.2, 0.25]),
])
def test_laplace_ratio_scales_quadratically_in_nu(sigma, nus):
    pot = cosine()
    cp = find_critical_points(pot, sigma)
    nus = np.asarray(nus)
    defects_mu, defects_eta = [], []
    for nu in nus:
        gibbs = GibbsEvaluator(pot, sigma, nu)
        defects_mu.append(abs(math.expm1(well_mass_log(gibbs, cp)
                                         - laplace_log_mu0(pot, sigma, nu, cp))))
        defects_eta.append(abs(math.expm1(barrier_resistance_log(gibbs, cp)
                                          - laplace_log_eta0(pot, sigma, nu, cp))))
    for defects in (defects_mu, defects_eta):
        slope = np.polyfit(np.log(nus), np.log(defects), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.3)


@pytest.mark.parametrize("sigma,nus", [
    (0.0, [0.25, 0.3, 0.4, 0.5]),
    (0.5, [0.12, 0.15, 0.2, 0.25]),
])
def test_theta_scales_quadratically_in_nu(sigma, nus):
    pot = cosine()
    nus = np.asarray(nus)
    thetas = [abs(compute_scalars(pot, sigma, nu).theta) for nu in nus]
    slope = np.polyfit(np.log(nus), np.log(thetas), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)


def test_theta_decreasing_in_nu_tilted():
    pot = cosine()
    thetas = [abs(compute_scalars(pot, 0.5, nu).theta) for nu in (0.5, 0.4, 0.3)]
    assert thetas[0] > thetas[1] > thetas[2]


def test_refined_time_scale_zeroes_theta():
    pot = cosine()
    sc = compute_scalars(pot, 0.5, 0.4, time_scale="refined")
    assert sc.theta == 0.0
    base = compute_scalars(pot, 0.5, 0.4)
    # the two scalings differ by exactly the factor 1 + theta
    assert sc.log_tau == pytest.approx(base.log_tau - math.log1p(base.theta), abs=1e-12)


def test_theta_invariant_under_well_shift():
    pot = cosine()
    nu = 0.4
    sc = compute_scalars(pot, 0.0, nu)
    gibbs = GibbsEvaluator(pot, 0.0, nu)
    # same quadrature one period over: identical theta
    log_mu1 = well_mass_log(gibbs, sc.cp, 1)
    log_eta1 = barrier_resistance_log(gibbs, sc.cp, 1)
    shifted_theta = math.expm1(sc.log_tau + log_mu1 + log_eta1 - 2.0 * math.log(nu))
    assert shifted_theta == pytest.approx(sc.theta, abs=1e-10)


def test_theta_log_domain_agrees_with_direct_product():
    pot = cosine()
    sc = compute_scalars(pot, 0.5, 0.5)
    direct = (sc.tau() * math.exp(sc.log_mu0) * math.exp(sc.log_eta0)
              / sc.nu**2) - 1.0
    assert sc.theta == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_kappa_underflow_keeps_log_authoritative():
    pot = cosine()
    sc = compute_scalars(pot, 0.9, 0.08)
    assert sc.kappa == 0.0
    assert sc.log_kappa == pytest.approx(-0.9 * pot.period / 0.08**2, rel=1e-14)
    # shallow forward barrier at this tilt: tau itself is representable
    assert sc.tau() > 0.0


def test_tau_underflow_raises_but_scalars_stay_finite():
    pot = cosine()
    sc = compute_scalars(pot, 0.0, 0.05)  # barrier 2, exponent 800
    assert math.isfinite(sc.log_tau) and math.isfinite(sc.theta)
    with pytest.raises(ScaleError):
        sc.tau()


def test_local_equilibrium_normalized_and_supported():
    pot = cosine()
    sigma, nu = 0.3, 0.45
    sc = compute_scalars(pot, sigma, nu)
    gibbs = GibbsEvaluator(pot, sigma, nu)
    for j in (-1, 0, 2):
        eq = local_equilibrium(sc, gibbs, j)
        lo, hi = float(sc.cp.maximum(j - 1)), float(sc.cp.maximum(j))
        mass, err = quad(lambda p: float(eq(np.array([p]))[0]), lo, hi, limit=200)
        assert mass == pytest.approx(1.0, abs=1e-8)
        outside = np.array([lo - 0.1, hi + 0.1, lo - 5.0])
        assert np.all(eq(outside) == 0.0)


def test_quadrature_refinement_stability():
    # halving every accepted panel must not move the well mass
    pot = cosine()
    cp = find_critical_points(pot, 0.5)
    gibbs = GibbsEvaluator(pot, 0.5, 0.3)
    peak = float(gibbs.log_gamma(cp.p_min))
    log_mu0, panels = log_integral(
        gibbs.log_gamma, float(cp.maximum(-1)), float(cp.maximum(0)),
        shift=peak, record_panels=True)

    def f(x):
        return np.exp(gibbs.log_gamma(x) - peak)

    refined = refine_panels(f, panels)
    assert math.log(refined) + peak == pytest.approx(log_mu0, abs=1e-10)


def test_quadrature_error_when_depth_exhausted():
    with pytest.raises(QuadratureError):
        adaptive_gl(lambda x: np.exp(-np.abs(x) ** 0.3), -1.0, 1.0,
                    rel_tol=1e-15, max_depth=3)
