"""Transition weights between wells and the well-counting coordinate.

The weight psi_j ramps from 0 to 1 across the barrier interval
K_j = (P_j, P_{j+1}) with slope proportional to the inverse Gibbs factor,

    psi_j'(p) = 1 / (eta_j * gamma(p))   on K_j,     psi_j' = 0 elsewhere,

so that psi_j(P_j) = 0 and psi_j(P_{j+1}) = 1.  Nearly all of the rise
happens in an O(nu) neighborhood of the maximum Q_j.  Differences of
consecutive weights form a partition of unity,

    sum_j (psi_{j-1} - psi_j) = 1,

which is exact by telescoping, and the accumulated coordinate

    phi(p) = sum_{j>=0} psi_j(p) - sum_{j<0} (1 - psi_j(p)),  phi(P_j) = j,

counts wells: it increases by exactly 1 per period and stays within a
bounded distance of (p - P_0)/L.

Weights are stored as cumulative-quadrature tables on the adaptive panel
mesh of the underlying integral, interpolated monotonically (PCHIP), with
the endpoint values pinned to exactly 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .asymptotics import GibbsEvaluator
from .errors import DegenerateError, WindowError
from .potential import CriticalPoints, PeriodicPotential
from .quadrature import _gl15, adaptive_gl, log_integral

# target absolute accuracy of a tabulated ramp value
_TABLE_TOL = 1e-10


def _cumulative_table(f, a: float, mid: float, b: float, rate: float,
                      rel_tol: float):
    """Cumulative integral table of f over [a, b] with a node pinned at mid.

    The two halves are meshed adaptively (panel density follows the peak of
    the integrand at ``mid``).  Each accepted panel is then subdivided until
    the quartic interpolation error bound  increment * (rate*width)^3 / 384
    drops below the table tolerance; ``rate`` is a bound on |d log f / dp|.
    Running sums are normalized by the total so the last entry is exactly 1.
    """
    nodes = [a]
    sums = [0.0]
    acc = 0.0
    halves = []
    for lo, hi in ((a, mid), (mid, b)):
        value, panels = adaptive_gl(f, lo, hi, rel_tol=rel_tol,
                                    record_panels=True)
        halves.append((value, panels))
    total_est = sum(v for v, _ in halves)
    for _, panels in halves:
        for panel in panels:
            width = panel.b - panel.a
            share = max(abs(panel.value) / total_est, 1e-16)
            n_sub = (width * rate) * (share / (384.0 * _TABLE_TOL)) ** 0.25
            n_sub = int(min(max(np.ceil(n_sub), 2), 4000))
            for k in range(n_sub):
                sa = panel.a + width * k / n_sub
                sb = panel.a + width * (k + 1) / n_sub
                acc += _gl15(f, sa, sb)
                nodes.append(sb)
                sums.append(acc)
    nodes_arr = np.asarray(nodes)
    sums_arr = np.asarray(sums)
    total = sums_arr[-1]
    values = sums_arr / total
    values[0] = 0.0
    values[-1] = 1.0
    return nodes_arr, values, total


def _monotone_cubic(nodes, values, slopes):
    """Cubic interpolant of monotone cumulative data.

    Exact end slopes give quartic accuracy; if the resulting cubic is not
    monotone on some under-resolved stretch, fall back to the shape-
    preserving slope choice on the same nodes.
    """
    interp = CubicHermiteSpline(nodes, values, slopes)
    probe = interp(np.repeat(nodes[:-1], 3)
                   + np.tile(np.array([0.25, 0.5, 0.75]), len(nodes) - 1)
                   * np.repeat(np.diff(nodes), 3))
    merged = np.empty(len(values) + len(probe))
    merged[::4] = values
    merged[1::4] = probe[::3]
    merged[2::4] = probe[1::3]
    merged[3::4] = probe[2::3]
    if np.any(np.diff(merged) < -1e-13):
        return PchipInterpolator(nodes, values, extrapolate=False)
    return interp


@dataclass
class WeightPsi:
    """Monotone ramp from 0 at P_j to 1 at P_{j+1}."""

    j: int
    p_lo: float
    p_hi: float
    barrier: float
    log_eta_j: float
    gibbs: GibbsEvaluator
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
        """Exact slope 1/(eta_j gamma), zero outside the ramp interval."""
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        mid = (p > self.p_lo) & (p < self.p_hi)
        if np.any(mid):
            out[mid] = np.exp(-self.gibbs.log_gamma(p[mid]) - self.log_eta_j)
        return out


def build_psi(j: int, cp: CriticalPoints, gibbs: GibbsEvaluator,
              rel_tol: float = 1e-11) -> WeightPsi:
    """Tabulate psi_j over K_j = (P_j, P_{j+1})."""
    p_lo = float(cp.minimum(j))
    p_hi = float(cp.minimum(j + 1))
    q = float(cp.maximum(j))
    shift = float(gibbs.log_inv_gamma(q))

    def f(p):
        return np.exp(gibbs.log_inv_gamma(p) - shift)

    pot = gibbs.pot
    rate = (max(abs(pot.sigma_min), abs(pot.sigma_max))
            + abs(gibbs.sigma)) / gibbs.nu**2
    nodes, values, total = _cumulative_table(f, p_lo, q, p_hi, rate, rel_tol)
    log_eta_j = shift + float(np.log(total))
    interp = _monotone_cubic(nodes, values, f(nodes) / total)
    return WeightPsi(j=j, p_lo=p_lo, p_hi=p_hi, barrier=q,
                     log_eta_j=log_eta_j, gibbs=gibbs, _interp=interp)


@dataclass
class PsiFamily:
    """Weights for a window of wells, with exact saturation outside it.

    ``value(j, p)`` works for any j: outside the built window the weight is
    the constant 0 or 1 as long as every requested p lies beyond the ramp
    of that weight; otherwise the window is genuinely too small and a
    :class:`WindowError` is raised.
    """

    cp: CriticalPoints
    j_lo: int
    j_hi: int
    members: dict

    def __getitem__(self, j: int) -> WeightPsi:
        return self.members[j]

    def value(self, j: int, p):
        p = np.asarray(p, dtype=float)
        if j in self.members:
            return self.members[j](p)
        if np.all(p <= float(self.cp.minimum(j))):
            return np.zeros_like(p)
        if np.all(p >= float(self.cp.minimum(j + 1))):
            return np.ones_like(p)
        raise WindowError(
            f"weight index {j} outside built window [{self.j_lo}, {self.j_hi}] "
            "and points fall inside its ramp"
        )

    def bump(self, j: int, p):
        """The partition-of-unity bump psi_{j-1} - psi_j for well j."""
        return self.value(j - 1, p) - self.value(j, p)


def build_psi_family(cp: CriticalPoints, gibbs: GibbsEvaluator,
                     j_lo: int, j_hi: int, rel_tol: float = 1e-11) -> PsiFamily:
    members = {j: build_psi(j, cp, gibbs, rel_tol=rel_tol)
               for j in range(j_lo, j_hi + 1)}
    return PsiFamily(cp=cp, j_lo=j_lo, j_hi=j_hi, members=members)


@dataclass
class WeightPhi:
    """Accumulated well coordinate phi on [P_{j_lo}, P_{j_hi+1}]."""

    family: PsiFamily
    p_lo: float
    p_hi: float

    def _check(self, p):
        if np.any(p < self.p_lo - 1e-12) or np.any(p > self.p_hi + 1e-12):
            raise WindowError(
                f"phi evaluated outside constructed range [{self.p_lo}, {self.p_hi}]"
            )

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        self._check(p)
        out = np.zeros_like(p)
        for j, psi in self.family.members.items():
            if j >= 0:
                out += psi(p)
            else:
                out -= 1.0 - psi(p)
        return out

    def prime(self, p):
        p = np.asarray(p, dtype=float)
        self._check(p)
        out = np.zeros_like(p)
        for psi in self.family.members.values():
            out += psi.prime(p)
        return out


def build_phi(cp: CriticalPoints, gibbs: GibbsEvaluator,
              j_lo: int, j_hi: int, rel_tol: float = 1e-11,
              family: PsiFamily | None = None) -> WeightPhi:
    """phi from the weight family covering wells j_lo..j_hi.

    The zero of phi sits at P_0, so the window must contain well 0.
    """
    if j_lo > 0 or j_hi < 0:
        raise WindowError("phi window must contain the reference well 0")
    if family is None:
        family = build_psi_family(cp, gibbs, j_lo, j_hi, rel_tol=rel_tol)
    return WeightPhi(family=family,
                     p_lo=float(cp.minimum(family.j_lo)),
                     p_hi=float(cp.minimum(family.j_hi + 1)))


@dataclass(frozen=True)
class InnerInterval:
    """Core subinterval I_j = (r_lo, r_hi) of the well J_j.

    The endpoints sit halfway (in effective-potential height) between the
    well bottom and the adjacent maxima; outside I_j the local equilibrium
    mass and the weight ramps are exponentially small.
    """

    j: int
    r_lo: float
    r_hi: float


def _bisect_level(v, lo, hi, target, increasing, tol=1e-12):
    a, b = lo, hi
    for _ in range(200):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        high = float(v(m)) > target
        if high == increasing:
            b = m
        else:
            a = m
    return 0.5 * (a + b)


def inner_intervals(cp: CriticalPoints, pot: PeriodicPotential, sigma: float,
                    js) -> list[InnerInterval]:
    """Half-height core intervals for the requested well indices."""
    v = pot.v_eff(sigma)
    out = []
    for j in js:
        q_prev = float(cp.maximum(j - 1))
        p_j = float(cp.minimum(j))
        q_next = float(cp.maximum(j))
        v_bottom = float(v(p_j))
        target_lo = 0.5 * (float(v(q_prev)) + v_bottom)
        target_hi = 0.5 * (float(v(q_next)) + v_bottom)
        if not (target_lo > v_bottom and target_hi > v_bottom):
            raise DegenerateError("well has no height to halve")
        r_lo = _bisect_level(v, q_prev, p_j, target_lo, increasing=False)
        r_hi = _bisect_level(v, p_j, q_next, target_hi, increasing=True)
        out.append(InnerInterval(j=j, r_lo=r_lo, r_hi=r_hi))
    return out


def outer_mass_fraction(interval: InnerInterval, cp: CriticalPoints,
                        gibbs: GibbsEvaluator, log_mu_j: float) -> float:
    """Mass of the local equilibrium outside the core interval.

    Decays like nu*sqrt(tau) as nu -> 0; used as a trend diagnostic.
    """
    j = interval.j
    q_prev, q_next = float(cp.maximum(j - 1)), float(cp.maximum(j))
    left = log_integral(gibbs.log_gamma, q_prev, interval.r_lo,
                        shift=float(gibbs.log_gamma(interval.r_lo)))
    right = log_integral(gibbs.log_gamma, interval.r_hi, q_next,
                         shift=float(gibbs.log_gamma(interval.r_hi)))
    return float(np.exp(left - log_mu_j) + np.exp(right - log_mu_j))
