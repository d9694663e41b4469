"""Bistable analogue of the washboard dynamics: two wells, one barrier.

A double-well potential H with H(0) = 0 its only local maximum and minima
P_- < 0 < P_+ of depths h_+- = -H(P_+-) carries a single slow degree of
freedom, the mass split between the wells.  With curvatures encoded as

    H''(0) = -2 pi omega_0^2,      H''(P_+-) = 2 pi omega_+-^2,

the half-line Gibbs masses mu_+- = int_{J_+-} gamma (J_- = (-inf, 0),
J_+ = (0, inf), gamma = exp(-H/nu^2)) and the barrier resistance
eta = int_{P_-}^{P_+} 1/gamma obey the Laplace laws

    mu_+- ~ (nu/omega_+-) exp(h_+-/nu^2),      eta ~ nu/omega_0,

and the hopping time is tau = omega_0 omega_- exp(-h_-/nu^2).  On that
time scale the substitute masses exchange according to

    (1 + theta) d/dt mtilde_+ = mbar_- - kappa mbar_+,   kappa = mu_-/mu_+,

which closes as nu -> 0 into a single linear ODE: with h_- < h_+ the
shallow well drains (kappa -> 0), while equal barriers give the rate ratio
kappa -> omega_+/omega_- and exponential relaxation to m_- = kappa m_+.

Labels are normalized so the shallow well sits on the left; requests with
h_- > h_+ are relabeled through the reflection p -> -p.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import (AlignmentError, ConfigError, DegenerateError, ModeError,
                     QuadratureError, ScaleError)
from .fpsolver import DensityField, Grid1D, bernoulli
from .potential import EXP_FLOOR
from .quadrature import log_integral
from .weights import _cumulative_table, _monotone_cubic

# curvature scales of (p^2 - 1)^2 - 1: H''(0) = -4, H''(+-1) = 8
OMEGA0_QUARTIC = math.sqrt(2.0 / math.pi)
OMEGA_QUARTIC = math.sqrt(4.0 / math.pi)

# below this the density is treated as vacuum in logarithmic quantities
RHO_FLOOR = 1e-300

# barriers closer than this count as exactly equal; within the warn band
# the generic ODE is still used but the crossover is flagged
EQUAL_BARRIER_TOL = 1e-9
EQUAL_BARRIER_WARN = 1e-3


@dataclass(frozen=True)
class DoubleWellPotential:
    """Piecewise double well H = a p^2 + c p^4 + d p^5, C^3 at the maximum.

    The quadratic coefficient a = -pi omega_0^2 is shared between the two
    half-lines and the cubic term is absent on both, so H''' is continuous
    (zero) at 0; a jump there would spoil the O(nu^2) Laplace law of the
    barrier integral eta with an O(nu) defect.  On each side the quartic
    and quintic coefficients solve H'(P) = 0, H''(P) = 2 pi omega^2,
    H(P) = -h in closed form, leaving depth and bottom curvature of the
    wells as independent knobs.  Confinement needs omega >= sqrt(2) omega_0
    per side (the quintic coefficient flips sign below that).
    """

    a: float
    c_minus: float
    d_minus: float
    c_plus: float
    d_plus: float
    p_minus: float
    p_plus: float
    h_minus: float
    h_plus: float
    omega0: float
    omega_minus: float
    omega_plus: float

    def __post_init__(self):
        if not self.p_minus < 0.0 < self.p_plus:
            raise ConfigError("minima must straddle the maximum at 0")
        if not 0.0 < self.h_minus <= self.h_plus:
            raise ConfigError("well depths must satisfy 0 < h_minus <= h_plus")
        if min(self.omega0, self.omega_minus, self.omega_plus) <= 0.0:
            raise ConfigError("curvature parameters must be positive")
        grows_right = self.d_plus > 0.0 or (self.d_plus == 0.0
                                            and self.c_plus > 0.0)
        grows_left = self.d_minus < 0.0 or (self.d_minus == 0.0
                                            and self.c_minus > 0.0)
        if not (grows_right and grows_left):
            raise DegenerateError("leading coefficients do not confine")

    def _side(self, p: np.ndarray):
        neg = p < 0.0
        c = np.where(neg, self.c_minus, self.c_plus)
        d = np.where(neg, self.d_minus, self.d_plus)
        return c, d

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        c, d = self._side(p)
        return p * p * (self.a + p * p * (c + p * d))

    def d1(self, p):
        p = np.asarray(p, dtype=float)
        c, d = self._side(p)
        return p * (2.0 * self.a + p * p * (4.0 * c + p * 5.0 * d))

    def d2(self, p):
        p = np.asarray(p, dtype=float)
        c, d = self._side(p)
        return 2.0 * self.a + p * p * (12.0 * c + p * 20.0 * d)

    def v_eff(self, sigma: float) -> Callable:
        """Effective potential H - sigma*p, interface shared with the solver."""
        def v(p):
            p = np.asarray(p, dtype=float)
            return self.evaluate(p) - sigma * p
        return v


def _quintic_side(h: float, omega: float, omega0: float, sign: float):
    """Coefficients (c, d) and the minimum P for one half-line.

    Solving H'(P) = 0 and H''(P) = 2 pi omega^2 linearly for (c, d) given
    P and inserting into H(P) = -h leaves H(P) = P^2 (3a - pi omega^2)/10,
    so the minimum has a closed form and no root finding is needed.  The
    sign pattern of (d, c, a) admits exactly one critical point per side
    by Descartes' rule, so the minimum is automatically unique.
    """
    if h <= 0.0:
        raise ConfigError("well depth must be positive")
    gap = omega**2 - 2.0 * omega0**2
    if gap < -1e-12:
        raise ConfigError(
            "well curvature omega must be at least sqrt(2)*omega0 to confine")
    a = -math.pi * omega0**2
    p = sign * math.sqrt(10.0 * h / (math.pi * (omega**2 + 3.0 * omega0**2)))
    c = -math.pi * (omega**2 - 3.0 * omega0**2) / (2.0 * p * p)
    # snap the reference-quartic case (omega = sqrt(2) omega0) to d = 0
    d = 0.0 if abs(gap) <= 1e-12 else 2.0 * math.pi * gap / (5.0 * p**3)
    return c, d, p


def make_double_well(h_minus: float = 1.0, h_plus: float = 1.0,
                     omega_minus: float = OMEGA_QUARTIC,
                     omega_plus: float = OMEGA_QUARTIC,
                     omega0: float = OMEGA0_QUARTIC) -> DoubleWellPotential:
    """Double well with independently prescribed depths and curvatures.

    Depths h_+- and bottom curvatures omega_+- are hit exactly; omega0
    fixes the curvature of the maximum.  Each omega must be at least
    sqrt(2)*omega0.  If h_minus > h_plus the two parameter pairs are
    swapped, which builds the reflected potential with the shallow well
    on the left.
    """
    if omega0 <= 0.0:
        raise ConfigError("omega0 must be positive")
    if h_minus > h_plus:
        h_minus, h_plus = h_plus, h_minus
        omega_minus, omega_plus = omega_plus, omega_minus
    c_m, d_m, p_m = _quintic_side(h_minus, omega_minus, omega0, -1.0)
    c_p, d_p, p_p = _quintic_side(h_plus, omega_plus, omega0, +1.0)
    return DoubleWellPotential(
        a=-math.pi * omega0**2, c_minus=c_m, d_minus=d_m, c_plus=c_p,
        d_plus=d_p, p_minus=p_m, p_plus=p_p, h_minus=h_minus, h_plus=h_plus,
        omega0=omega0, omega_minus=omega_minus, omega_plus=omega_plus)


def symmetric_quartic() -> DoubleWellPotential:
    """The reference well (p^2 - 1)^2 - 1, recovered from its curvatures."""
    return make_double_well()


@dataclass(frozen=True)
class DoubleWellScalars:
    """Log-scaled Gibbs integrals of a double well and the derived ratios."""

    nu: float
    log_mu_minus: float
    log_mu_plus: float
    log_eta: float
    log_tau: float
    theta: float

    @property
    def kappa(self) -> float:
        """Mass ratio mu_- / mu_+ <= O(1); underflows only for huge gaps."""
        return math.exp(self.log_mu_minus - self.log_mu_plus)

    def tau(self) -> float:
        if self.log_tau < -EXP_FLOOR:
            raise ScaleError(
                f"tau = exp({self.log_tau:.3g}) underflows; keep to log scale")
        return math.exp(self.log_tau)

    def _linear(self, log_value: float, name: str) -> float:
        if abs(log_value) > EXP_FLOOR:
            raise ScaleError(f"{name} is not representable; keep to log scale")
        return math.exp(log_value)

    def mu_minus(self) -> float:
        return self._linear(self.log_mu_minus, "mu_minus")

    def mu_plus(self) -> float:
        return self._linear(self.log_mu_plus, "mu_plus")

    def eta(self) -> float:
        return self._linear(self.log_eta, "eta")


def _level_crossing(pot: DoubleWellPotential, start: float, direction: float,
                    level: float) -> float:
    """First point beyond start (walking in direction) where H hits level."""
    stride = max(1.0, abs(start))
    a = start
    for _ in range(64):
        b = a + direction * stride
        if float(pot.evaluate(b)) >= level:
            lo, hi = min(a, b), max(a, b)
            return float(brentq(lambda p: float(pot.evaluate(p)) - level,
                                lo, hi, xtol=1e-13, rtol=8.9e-16))
        a = b
    raise QuadratureError("potential never reaches the truncation level")


def _mu_window(pot: DoubleWellPotential, sign: float, nu: float):
    """Integration window for mu on one half-line.

    The window ends where the integrand has dropped to e^-60 relative to
    the well bottom; beyond the origin side the cut can exceed H(0) = 0,
    in which case the whole inner half-line up to 0 is kept.
    """
    h_s = pot.h_minus if sign < 0 else pot.h_plus
    p_s = pot.p_minus if sign < 0 else pot.p_plus
    level = -h_s + 60.0 * nu * nu
    outer = _level_crossing(pot, p_s, sign, level)
    if level < 0.0:
        lo, hi = (p_s, 0.0) if sign < 0 else (0.0, p_s)
        inner = float(brentq(lambda p: float(pot.evaluate(p)) - level,
                             lo, hi, xtol=1e-13, rtol=8.9e-16))
    else:
        inner = 0.0
    return (outer, inner) if sign < 0 else (inner, outer)


def dw_scalars(pot: DoubleWellPotential, nu: float,
               rel_tol: float = 1e-10) -> DoubleWellScalars:
    """Quadrature values of mu_-, mu_+, eta and the ratios kappa, theta, tau.

    All integrals are evaluated in the log domain with the shift at the
    integrand peak (the well bottom for mu, the maximum at 0 for eta).
    """
    if nu <= 0.0:
        raise ConfigError("nu must be positive")
    nu2 = nu * nu

    def log_gamma(p):
        return -pot.evaluate(p) / nu2

    lo_m, hi_m = _mu_window(pot, -1.0, nu)
    lo_p, hi_p = _mu_window(pot, +1.0, nu)
    log_mu_minus = log_integral(log_gamma, lo_m, hi_m,
                                shift=pot.h_minus / nu2, rel_tol=rel_tol)
    log_mu_plus = log_integral(log_gamma, lo_p, hi_p,
                               shift=pot.h_plus / nu2, rel_tol=rel_tol)
    log_eta = log_integral(lambda p: pot.evaluate(p) / nu2,
                           pot.p_minus, pot.p_plus, shift=0.0,
                           rel_tol=rel_tol)
    log_tau = math.log(pot.omega0 * pot.omega_minus) - pot.h_minus / nu2
    theta = math.expm1(log_tau + log_mu_minus + log_eta - 2.0 * math.log(nu))
    return DoubleWellScalars(nu=nu, log_mu_minus=log_mu_minus,
                             log_mu_plus=log_mu_plus, log_eta=log_eta,
                             log_tau=log_tau, theta=theta)


@dataclass(frozen=True)
class DwEquilibrium:
    """Normalized global equilibrium gamma / (mu_- + mu_+)."""

    pot: DoubleWellPotential
    nu: float
    log_norm: float

    def log_density(self, p):
        return -self.pot.evaluate(p) / self.nu**2 - self.log_norm

    def __call__(self, p):
        return np.exp(self.log_density(p))

    @property
    def energy_floor(self) -> float:
        """The free-energy lower bound -nu^2 log(mu_- + mu_+)."""
        return -self.nu**2 * self.log_norm


def dw_equilibrium(pot: DoubleWellPotential, nu: float,
                   scalars: DoubleWellScalars | None = None) -> DwEquilibrium:
    if scalars is None:
        scalars = dw_scalars(pot, nu)
    log_norm = float(np.logaddexp(scalars.log_mu_minus, scalars.log_mu_plus))
    return DwEquilibrium(pot=pot, nu=nu, log_norm=log_norm)


def dw_grid(pot: DoubleWellPotential, nu: float, n_cells: int = 1024) -> Grid1D:
    """Solver grid truncated where H = h_+ + 60 nu^2, with an edge at 0.

    The no-flux ends sit deep in the quartic growth region; confinement
    there is checked via the slope sign.  The cell width is adjusted so a
    cell edge lands exactly on the maximum, which keeps the left/right
    mass split a plain cell sum.
    """
    if n_cells < 16:
        raise ConfigError("need at least 16 cells")
    level = pot.h_plus + 60.0 * nu * nu
    p_lo = _level_crossing(pot, pot.p_minus, -1.0, level)
    p_hi = _level_crossing(pot, pot.p_plus, +1.0, level)
    if not (float(pot.d1(p_lo)) < 0.0 < float(pot.d1(p_hi))):
        raise DegenerateError("potential does not confine at the domain ends")
    h0 = (p_hi - p_lo) / n_cells
    n_left = int(round(-p_lo / h0))
    n_left = min(max(n_left, 1), n_cells - 1)
    h = -p_lo / n_left
    return Grid1D(p_lo=-n_left * h, p_hi=(n_cells - n_left) * h,
                  n_cells=n_cells)


@dataclass
class DwWeight:
    """Monotone ramp from 0 at P_- to 1 at P_+ with slope 1/(eta gamma)."""

    p_lo: float
    p_hi: float
    log_eta: float
    pot: DoubleWellPotential
    nu: float
    _interp: CubicHermiteSpline

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        out = np.empty_like(p)
        below = p <= self.p_lo
        above = p >= self.p_hi
        mid = ~(below | above)
        out[below] = 0.0
        out[above] = 1.0
        if np.any(mid):
            out[mid] = self._interp(p[mid])
        return out

    def prime(self, p):
        """Exact slope exp(H/nu^2)/eta, zero outside the ramp interval."""
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        mid = (p > self.p_lo) & (p < self.p_hi)
        if np.any(mid):
            out[mid] = np.exp(self.pot.evaluate(p[mid]) / self.nu**2
                              - self.log_eta)
        return out


def dw_weight_psi(pot: DoubleWellPotential, nu: float,
                  rel_tol: float = 1e-11) -> DwWeight:
    """Tabulate the moment weight over (P_-, P_+).

    The integrand exp(H/nu^2) peaks at the maximum (where it equals 1), so
    no log shift is needed; the cumulative table pins psi(P_-) = 0 and
    psi(P_+) = 1 exactly.
    """
    nu2 = nu * nu

    def f(p):
        return np.exp(pot.evaluate(p) / nu2)

    sample = np.linspace(pot.p_minus, pot.p_plus, 513)
    rate = float(np.max(np.abs(pot.d1(sample)))) / nu2
    nodes, values, total = _cumulative_table(f, pot.p_minus, 0.0, pot.p_plus,
                                             rate, rel_tol)
    interp = _monotone_cubic(nodes, values, f(nodes) / total)
    return DwWeight(p_lo=pot.p_minus, p_hi=pot.p_plus,
                    log_eta=float(np.log(total)), pot=pot, nu=nu,
                    _interp=interp)


class DwMasses(NamedTuple):
    """Substitute masses of one density snapshot; flagged lists empty wells."""

    mbar_minus: float
    mbar_plus: float
    mtilde_minus: float
    mtilde_plus: float
    flagged: tuple = ()


def dw_partial_masses(rho: DensityField):
    """Exact mass split (m_-, m_+) across the cell edge at the maximum."""
    grid = rho.grid
    h = grid.h
    k = int(round(-grid.p_lo / h))
    if k < 0 or k > grid.n_cells or abs(grid.p_lo + k * h) > 1e-8 * h:
        raise AlignmentError("p = 0 does not sit on a cell edge")
    m_minus = float(np.sum(rho.values[:k]) * h)
    m_plus = float(np.sum(rho.values[k:]) * h)
    return m_minus, m_plus


def dw_substitute_masses(rho: DensityField, scalars: DoubleWellScalars,
                         pot: DoubleWellPotential,
                         psi: DwWeight | None = None) -> DwMasses:
    """Well-bottom masses mbar_+- and moment masses mtilde_+-.

    mbar_+- = mu_+- (rho/gamma)(P_+-) with log(rho/gamma) interpolated
    linearly between the flanking cell centers (exact for rho proportional
    to gamma on the well); mtilde_- = int (1-psi) rho and mtilde_+ =
    int psi rho, which sum to the total mass up to roundoff.  A well whose
    flanking cells are both empty reports mbar = 0 and the label -1 or +1
    in flagged.
    """
    if psi is None:
        psi = dw_weight_psi(pot, scalars.nu)
    grid = rho.grid
    centers = grid.centers
    nu2 = scalars.nu**2
    with np.errstate(divide="ignore"):
        log_rel = (np.log(np.maximum(rho.values, 0.0))
                   + pot.evaluate(centers) / nu2)
    mbar = {}
    flagged = []
    for label, p, log_mu in ((-1, pot.p_minus, scalars.log_mu_minus),
                             (+1, pot.p_plus, scalars.log_mu_plus)):
        k = int(np.searchsorted(centers, p))
        k = min(max(k, 1), grid.n_cells - 1)
        if rho.values[k - 1] <= 0.0 and rho.values[k] <= 0.0:
            flagged.append(label)
            mbar[label] = 0.0
            continue
        w = (p - centers[k - 1]) / grid.h
        r = (1.0 - w) * log_rel[k - 1] + w * log_rel[k]
        mbar[label] = math.exp(log_mu + r) if np.isfinite(r) else 0.0
    cell_mass = rho.values * grid.h
    wvals = psi(centers)
    mtilde_plus = float(np.dot(wvals, cell_mass))
    mtilde_minus = float(np.dot(1.0 - wvals, cell_mass))
    return DwMasses(mbar_minus=mbar[-1], mbar_plus=mbar[+1],
                    mtilde_minus=mtilde_minus, mtilde_plus=mtilde_plus,
                    flagged=tuple(flagged))


def dw_dissipation(rho: DensityField, pot: DoubleWellPotential,
                   nu: float) -> float:
    """Flux-form dissipation; exactly zero on discrete Gibbs states."""
    grid = rho.grid
    v = pot.v_eff(0.0)(grid.centers)
    u = np.diff(v) / nu**2
    r = rho.values
    flux = (nu**2 / grid.h) * (bernoulli(u) * r[:-1] - bernoulli(-u) * r[1:])
    r_edge = 0.5 * (r[:-1] + r[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib = np.where(r_edge > RHO_FLOOR,
                           grid.h * (flux / nu**2) ** 2 / r_edge, 0.0)
    return float(np.sum(contrib))


class EffectiveRateResidual(NamedTuple):
    """Both sides of the two-phase exchange law along a trajectory."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray


def dw_effective_rate(times: Sequence[float], masses: Sequence[DwMasses],
                      scalars: DoubleWellScalars) -> EffectiveRateResidual:
    """Residual of (1+theta) d/dt mtilde_+ = mbar_- - kappa mbar_+.

    The time derivative is taken by central differences at the interior
    snapshot times, so the residual carries an O(dt^2) differencing error
    on top of the model defect; both sides are normalized by the largest
    magnitude either attains along the trajectory.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) != len(masses):
        raise ConfigError("times and masses must align one-to-one")
    if len(t) < 3:
        raise ConfigError("need at least three snapshots for a derivative")
    if np.any(np.diff(t) <= 0.0):
        raise ConfigError("times must increase strictly")
    mt_plus = np.array([m.mtilde_plus for m in masses])
    mb_minus = np.array([m.mbar_minus for m in masses])
    mb_plus = np.array([m.mbar_plus for m in masses])
    lhs = (1.0 + scalars.theta) * (mt_plus[2:] - mt_plus[:-2]) / (t[2:] - t[:-2])
    rhs = (mb_minus - scalars.kappa * mb_plus)[1:-1]
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return EffectiveRateResidual(times=t[1:-1], lhs=lhs, rhs=rhs,
                                 residual=np.abs(lhs - rhs) / scale)


def dw_mode_for(pot: DoubleWellPotential) -> str:
    """Limit-dynamics mode of a potential from its barrier gap.

    Gaps inside EQUAL_BARRIER_TOL count as exactly equal; gaps below
    EQUAL_BARRIER_WARN fall back to the generic mode with a warning, since
    the crossover region is not covered by either limit ODE.
    """
    gap = abs(pot.h_plus - pot.h_minus)
    if gap <= EQUAL_BARRIER_TOL:
        return "equal-barriers"
    if gap <= EQUAL_BARRIER_WARN:
        warnings.warn(
            f"barrier gap {gap:.3g} is near the equal-barrier crossover; "
            "treating the dynamics as generic", stacklevel=2)
    return "generic"


class DwOdeTrajectory(NamedTuple):
    """Closed-form limit trajectory of the two-phase mass exchange."""

    times: np.ndarray
    m_minus: np.ndarray
    m_plus: np.ndarray


def dw_limit_ode(m0_minus: float, T: float, mode: str = "generic",
                 kappa: float | None = None,
                 pot: DoubleWellPotential | None = None,
                 n_times: int = 201) -> DwOdeTrajectory:
    """Limit ODE for the well masses with total mass 1.

    generic (h_- < h_+): the shallow well drains, m_-(t) = m_-(0) e^-t.
    equal-barriers: d/dt m_+ = m_- - kappa m_+ relaxes exponentially at
    rate 1 + kappa to the steady state m_+ = 1/(1+kappa), with kappa =
    omega_+/omega_- when derived from a potential.  A supplied potential
    must be consistent with the requested mode.
    """
    if not -1e-12 <= m0_minus <= 1.0 + 1e-12:
        raise ConfigError("initial left mass must lie in [0, 1]")
    m0_minus = min(max(m0_minus, 0.0), 1.0)
    if T < 0.0:
        raise ConfigError("T must be nonnegative")
    if n_times < 2:
        raise ConfigError("need at least two output times")
    if mode not in ("generic", "equal-barriers"):
        raise ModeError(f"unknown mode {mode!r}")
    if pot is not None:
        detected = dw_mode_for(pot)
        if detected != mode:
            raise ModeError(
                f"mode {mode!r} conflicts with barrier gap "
                f"{abs(pot.h_plus - pot.h_minus):.3g}")
    times = np.linspace(0.0, T, n_times)
    if mode == "generic":
        m_minus = m0_minus * np.exp(-times)
        return DwOdeTrajectory(times=times, m_minus=m_minus,
                               m_plus=1.0 - m_minus)
    if kappa is None:
        if pot is None:
            raise ConfigError("equal-barriers mode needs kappa or a potential")
        kappa = pot.omega_plus / pot.omega_minus
    if kappa <= 0.0:
        raise ConfigError("kappa must be positive")
    m_inf = 1.0 / (1.0 + kappa)
    m_plus = m_inf + ((1.0 - m0_minus) - m_inf) * np.exp(-(1.0 + kappa) * times)
    return DwOdeTrajectory(times=times, m_minus=1.0 - m_plus, m_plus=m_plus)
