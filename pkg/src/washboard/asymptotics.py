"""Gibbs-factor integrals of the tilted potential and their small-noise laws.

For the effective potential H_eff = H - sigma*p and noise strength nu the
(unnormalized) Gibbs factor is

    gamma(p) = exp((-H(p) + sigma*p) / nu^2) = exp(-H_eff(p)/nu^2).

Two families of integrals control the metastable dynamics: well masses
mu_j over J_j = (Q_{j-1}, Q_j) and barrier resistances eta_j over
K_j = (P_j, P_{j+1}),

    mu_j  = int_{J_j} gamma dp   = mu_0 * kappa^{-j},
    eta_j = int_{K_j} 1/gamma dp = eta_0 * kappa^{+j},
    kappa = exp(-sigma*L/nu^2),

where the j-dependence is exact because gamma picks up the factor
exp(sigma*L/nu^2) per period.  Both integrals concentrate at a single
critical point, so Laplace's method gives

    mu_0  ~ nu*sqrt(2*pi/H''(P_0))  * gamma(P_0),
    eta_0 ~ nu*sqrt(2*pi/|H''(Q_0)|) / gamma(Q_0),

each with relative error O(nu^2).  The dimensionless defect

    theta = tau * mu_0 * eta_0 / nu^2 - 1,   |theta| = O(nu^2),

measures how far the Kramers prefactor is from the exact quadratures; it is
the leading model error of the hopping limit at finite nu.

Everything here is stored and combined in the log domain; linear-domain
values are only formed for ratios that are O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScaleError
from .potential import (
    EXP_FLOOR,
    CriticalPoints,
    KramersData,
    PeriodicPotential,
    barriers,
    find_critical_points,
)
from .quadrature import log_integral

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GibbsEvaluator:
    """Pointwise log-Gibbs factor of a tilted periodic potential."""

    pot: PeriodicPotential
    sigma: float
    nu: float

    def log_gamma(self, p):
        p = np.asarray(p, dtype=float)
        return (-self.pot.evaluate(p) + self.sigma * p) / self.nu**2

    def log_inv_gamma(self, p):
        return -self.log_gamma(p)

    def gamma(self, p, shift: float = 0.0):
        """gamma(p) * exp(-shift); pass a peak log-value to stay in range."""
        return np.exp(self.log_gamma(p) - shift)


def well_mass_log(gibbs: GibbsEvaluator, cp: CriticalPoints, j: int = 0,
                  rel_tol: float = 1e-10, record_panels: bool = False):
    """log mu_j by adaptive quadrature of gamma over J_j = (Q_{j-1}, Q_j)."""
    peak = float(gibbs.log_gamma(cp.minimum(j)))
    return log_integral(gibbs.log_gamma, float(cp.maximum(j - 1)),
                        float(cp.maximum(j)), shift=peak, rel_tol=rel_tol,
                        record_panels=record_panels)


def barrier_resistance_log(gibbs: GibbsEvaluator, cp: CriticalPoints, j: int = 0,
                           rel_tol: float = 1e-10, record_panels: bool = False):
    """log eta_j by adaptive quadrature of 1/gamma over K_j = (P_j, P_{j+1})."""
    peak = float(gibbs.log_inv_gamma(cp.maximum(j)))
    return log_integral(gibbs.log_inv_gamma, float(cp.minimum(j)),
                        float(cp.minimum(j + 1)), shift=peak, rel_tol=rel_tol,
                        record_panels=record_panels)


def laplace_log_mu0(pot: PeriodicPotential, sigma: float, nu: float,
                    cp: CriticalPoints) -> float:
    """Leading-order Laplace value of log mu_0 (peak at P_0)."""
    curv = float(pot.d2(cp.p_min))
    return (math.log(nu * SQRT_TWO_PI / math.sqrt(curv))
            + (-float(pot.evaluate(cp.p_min)) + sigma * cp.p_min) / nu**2)


def laplace_log_eta0(pot: PeriodicPotential, sigma: float, nu: float,
                     cp: CriticalPoints) -> float:
    """Leading-order Laplace value of log eta_0 (peak at Q_0)."""
    curv = abs(float(pot.d2(cp.p_max)))
    return (math.log(nu * SQRT_TWO_PI / math.sqrt(curv))
            + (float(pot.evaluate(cp.p_max)) - sigma * cp.p_max) / nu**2)


@dataclass(frozen=True)
class AsymptoticScalars:
    """Log-domain bundle of the scalars governing one (pot, sigma, nu)."""

    sigma: float
    nu: float
    log_mu0: float
    log_eta0: float
    log_kappa: float
    log_tau: float
    theta: float
    cp: CriticalPoints
    kd: KramersData
    gibbs: GibbsEvaluator

    @property
    def kappa(self) -> float:
        # may underflow to 0.0 for strong tilt; log_kappa stays authoritative
        return math.exp(self.log_kappa) if self.log_kappa > -EXP_FLOOR else 0.0

    def tau(self) -> float:
        if self.log_tau < -EXP_FLOOR:
            raise ScaleError(f"tau underflows at nu={self.nu}")
        return math.exp(self.log_tau)

    def log_mu(self, j: int) -> float:
        return self.log_mu0 - j * self.log_kappa

    def log_eta(self, j: int) -> float:
        return self.log_eta0 + j * self.log_kappa


def compute_scalars(pot: PeriodicPotential, sigma: float, nu: float,
                    rel_tol: float = 1e-10,
                    cp: CriticalPoints | None = None,
                    kd: KramersData | None = None,
                    time_scale: str = "kramers") -> AsymptoticScalars:
    """Quadrature-exact scalars for one parameter point.

    ``time_scale="kramers"`` uses tau = c_K exp(-min(h)/nu^2); the refined
    alternative ``"refined"`` sets tau = nu^2/(mu_0 eta_0), which makes
    theta vanish identically.
    """
    if cp is None:
        cp = find_critical_points(pot, sigma)
    if kd is None:
        kd = barriers(pot, sigma, cp)
    gibbs = GibbsEvaluator(pot, sigma, nu)
    log_mu0 = well_mass_log(gibbs, cp, 0, rel_tol=rel_tol)
    log_eta0 = barrier_resistance_log(gibbs, cp, 0, rel_tol=rel_tol)
    log_kappa = -sigma * pot.period / nu**2
    if time_scale == "kramers":
        log_tau = kd.log_tau(nu)
        theta = math.expm1(log_tau + log_mu0 + log_eta0 - 2.0 * math.log(nu))
    elif time_scale == "refined":
        log_tau = 2.0 * math.log(nu) - log_mu0 - log_eta0
        theta = 0.0
    else:
        raise ValueError(f"unknown time_scale {time_scale!r}")
    return AsymptoticScalars(
        sigma=sigma, nu=nu, log_mu0=log_mu0, log_eta0=log_eta0,
        log_kappa=log_kappa, log_tau=log_tau, theta=theta, cp=cp, kd=kd,
        gibbs=gibbs,
    )


@dataclass(frozen=True)
class LocalEquilibrium:
    """gamma_j = gamma/mu_j restricted to its well J_j; integrates to one."""

    gibbs: GibbsEvaluator
    j: int
    lo: float
    hi: float
    log_mu_j: float

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        inside = (p >= self.lo) & (p <= self.hi)
        out = np.zeros_like(p)
        lg = self.gibbs.log_gamma(p[inside]) - self.log_mu_j
        out[inside] = np.exp(lg)
        return out

    def log_density(self, p):
        """log gamma_j without the support cutoff (for log-domain callers)."""
        return self.gibbs.log_gamma(p) - self.log_mu_j


def local_equilibrium(scalars: AsymptoticScalars, gibbs: GibbsEvaluator,
                      j: int = 0) -> LocalEquilibrium:
    cp = scalars.cp
    return LocalEquilibrium(
        gibbs=gibbs, j=j,
        lo=float(cp.maximum(j - 1)), hi=float(cp.maximum(j)),
        log_mu_j=scalars.log_mu(j),
    )
