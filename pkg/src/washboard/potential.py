"""Periodic well potentials, their critical points, and Kramers scales.

A potential H is L-periodic with a single ascending and a single descending
branch of H' per period (one well, one barrier).  Tilting by sigma gives the
effective potential  H_eff(p) = H(p) - sigma*p.  For subcritical tilts,
min H' < sigma < max H', each period keeps exactly one local minimum P_j and
one local maximum Q_j of H_eff, ordered P_j < Q_j < P_{j+1}, and the two
barrier heights seen from a well bottom,

    h_left  = H_eff(Q_{j-1}) - H_eff(P_j),
    h_right = H_eff(Q_j)     - H_eff(P_j),

do not depend on j.  The Kramers scale built from them,

    tau(nu) = c_K * exp(-min(h_left, h_right)/nu^2),
    c_K     = sqrt(|H''(P_0) * H''(Q_0)|) / (2*pi),

is the unit of time for all metastable runs in this package.

All evaluator callables are vectorized (numpy ufunc semantics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.optimize import minimize_scalar

from .errors import ConfigError, DegenerateError, RegimeError, ScaleError

# exp(-x) underflows to zero around x ~ 745; refuse slightly earlier.
EXP_FLOOR = 700.0

_SCAN_POINTS = 256  # coarse scan resolution per period, 2**8


@dataclass(frozen=True)
class PeriodicPotential:
    """A smooth L-periodic potential with derivatives up to third order."""

    evaluate: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    period: float
    sigma_min: float  # global minimum of H'
    sigma_max: float  # global maximum of H'
    zeta: float       # sup |H'''|
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def v_eff(self, sigma: float) -> Callable:
        """Effective (tilted) potential p -> H(p) - sigma*p."""
        h = self.evaluate

        def v(p):
            return h(p) - sigma * np.asarray(p, dtype=float)

        return v

    def validate(self, n_samples: int = 1000, rel_tol: float = 1e-12) -> None:
        """Check periodicity of H and H' and the branch structure of H'.

        Raises :class:`DegenerateError` when sampling finds H'' ~ 0 at a
        point where H' is not near one of its global extremes (a fold that
        is not the single max/min per period).
        """
        rng = np.random.default_rng(0)
        p = rng.uniform(0.0, self.period, n_samples)
        scale = max(1.0, float(np.max(np.abs(self.evaluate(p)))))
        if np.max(np.abs(self.evaluate(p + self.period) - self.evaluate(p))) > rel_tol * scale:
            raise DegenerateError("potential is not periodic at the declared period")
        d1scale = max(1.0, float(np.max(np.abs(self.d1(p)))))
        if np.max(np.abs(self.d1(p + self.period) - self.d1(p))) > rel_tol * d1scale:
            raise DegenerateError("slope is not periodic at the declared period")
        if not self.sigma_min < self.sigma_max:
            raise DegenerateError("slope range is empty; potential has no wells under tilt")
        # Where H'' vanishes, H' must sit at one of its global extremes.
        dense = np.linspace(0.0, self.period, 4096, endpoint=False)
        curv = np.asarray(self.d2(dense), dtype=float)
        slope = np.asarray(self.d1(dense), dtype=float)
        span = self.sigma_max - self.sigma_min
        flat = np.abs(curv) < 1e-3 * max(1.0, float(np.max(np.abs(curv))))
        gap = np.minimum(np.abs(slope - self.sigma_min), np.abs(slope - self.sigma_max))
        if np.any(flat & (gap > 0.05 * span)):
            raise DegenerateError("H' has an interior fold; slope is not single-humped")


def _refine_extremum(f: Callable, period: float, find_max: bool) -> float:
    """Golden-section polish of a coarse-scan extremum of a periodic f."""
    xs = np.linspace(0.0, period, _SCAN_POINTS, endpoint=False)
    vals = np.asarray(f(xs), dtype=float)
    i = int(np.argmax(vals)) if find_max else int(np.argmin(vals))
    hstep = period / _SCAN_POINTS
    a, b, c = xs[i] - hstep, xs[i], xs[i] + hstep
    sign = -1.0 if find_max else 1.0

    def obj(x):
        return sign * float(f(x))

    try:
        res = minimize_scalar(obj, bracket=(a, b, c), method="golden",
                              options={"xtol": 1e-11})
        x0 = float(res.x)
    except ValueError:
        res = minimize_scalar(obj, bounds=(a, c), method="bounded",
                              options={"xatol": 1e-11})
        x0 = float(res.x)
    return float(f(x0))


def _slope_range(d1: Callable, period: float) -> tuple[float, float]:
    lo = _refine_extremum(d1, period, find_max=False)
    hi = _refine_extremum(d1, period, find_max=True)
    return lo, hi


def _sup_abs(f: Callable, period: float) -> float:
    def absf(x):
        return np.abs(f(x))

    return _refine_extremum(absf, period, find_max=True)


def cosine() -> PeriodicPotential:
    """H(p) = -cos(p): the standard single-well washboard cell.

    Slope range is [-1, 1] and sup|H'''| = 1, all exact.
    """
    return PeriodicPotential(
        evaluate=lambda p: -np.cos(p),
        d1=np.sin,
        d2=np.cos,
        d3=lambda p: -np.sin(p),
        period=2.0 * math.pi,
        sigma_min=-1.0,
        sigma_max=1.0,
        zeta=1.0,
        kind="cosine",
    )


def g_of_sin(
    g: Callable,
    dg: Callable,
    d2g: Callable,
    d3g: Callable,
    kind: str = "g_of_sin",
    params: dict | None = None,
) -> PeriodicPotential:
    """H(p) = G(sin p) for a strictly increasing smooth G on [-1, 1].

    Monotone G keeps the single-branch structure of H'; the factory rejects
    a G whose derivative changes sign on [-1, 1].
    """
    s_check = np.linspace(-1.0, 1.0, 201)
    if np.any(np.asarray(dg(s_check), dtype=float) <= 0.0):
        raise ConfigError("G must be strictly increasing on [-1, 1]")

    def h(p):
        return g(np.sin(p))

    def h1(p):
        return dg(np.sin(p)) * np.cos(p)

    def h2(p):
        s, c = np.sin(p), np.cos(p)
        return d2g(s) * c * c - dg(s) * s

    def h3(p):
        s, c = np.sin(p), np.cos(p)
        return d3g(s) * c**3 - 3.0 * d2g(s) * s * c - dg(s) * c

    period = 2.0 * math.pi
    lo, hi = _slope_range(h1, period)
    pot = PeriodicPotential(
        evaluate=h, d1=h1, d2=h2, d3=h3, period=period,
        sigma_min=lo, sigma_max=hi, zeta=_sup_abs(h3, period),
        kind=kind, params=dict(params or {}),
    )
    pot.validate()
    return pot


def g_of_sin_quadratic(a: float, b: float) -> PeriodicPotential:
    """The two-parameter family H(p) = a*sin(p) + (b/2)*sin(p)^2.

    Here G(y) = a*y + (b/2)*y^2, strictly increasing on [-1, 1] iff a > |b|.
    b != 0 breaks the left/right symmetry of the well.
    """
    if not a > abs(b):
        raise ConfigError(f"need a > |b| for monotone G, got a={a}, b={b}")
    return g_of_sin(
        g=lambda y: a * y + 0.5 * b * y * y,
        dg=lambda y: a + b * y,
        d2g=lambda y: b * np.ones_like(np.asarray(y, dtype=float)),
        d3g=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        kind="g_of_sin",
        params={"a": a, "b": b},
    )


def from_table(p_points, h_values) -> PeriodicPotential:
    """Interpolate one closed period of tabulated H with a quintic spline.

    The sample must cover exactly one period (first and last value equal to
    1e-10 relative) and be dense enough that the spline's third derivative
    is trusted; roughly 40+ points per period for smooth data.
    """
    p_points = np.asarray(p_points, dtype=float)
    h_values = np.asarray(h_values, dtype=float)
    if p_points.ndim != 1 or p_points.shape != h_values.shape or len(p_points) < 8:
        raise ConfigError("need matching 1-d arrays with at least 8 samples")
    if np.any(np.diff(p_points) <= 0.0):
        raise ConfigError("sample positions must be strictly increasing")
    period = float(p_points[-1] - p_points[0])
    scale = max(1.0, float(np.max(np.abs(h_values))))
    if abs(h_values[-1] - h_values[0]) > 1e-10 * scale:
        raise ConfigError("first and last sample must close the period")
    closed = h_values.copy()
    closed[-1] = closed[0]
    spline = make_interp_spline(p_points, closed, k=5, bc_type="periodic")
    d1s, d2s, d3s = spline.derivative(1), spline.derivative(2), spline.derivative(3)
    p0 = float(p_points[0])

    def wrap(s):
        def f(p):
            return s(p0 + np.mod(np.asarray(p, dtype=float) - p0, period))

        return f

    h, h1, h2, h3 = wrap(spline), wrap(d1s), wrap(d2s), wrap(d3s)
    lo, hi = _slope_range(h1, period)
    pot = PeriodicPotential(
        evaluate=h, d1=h1, d2=h2, d3=h3, period=period,
        sigma_min=lo, sigma_max=hi, zeta=_sup_abs(h3, period),
        kind="table",
        params={"n_samples": len(p_points), "period": period},
    )
    pot.validate()
    return pot


@dataclass(frozen=True)
class CriticalPoints:
    """Positions of the tilted-potential extrema, one pair per period.

    ``p_min`` is the local minimum P_0 in [0, L); all others follow by
    periodicity, with P_j < Q_j < P_{j+1}.
    """

    p_min: float
    p_max: float
    period: float

    def minimum(self, j):
        return self.p_min + np.asarray(j) * self.period

    def maximum(self, j):
        return self.p_max + np.asarray(j) * self.period


def find_critical_points(pot: PeriodicPotential, sigma: float) -> CriticalPoints:
    """Locate the unique minimum/maximum pair of H_eff per period.

    Coarse sign scan of H' - sigma, bisection to absolute width 1e-14,
    then two Newton steps with H''.  Raises :class:`RegimeError` outside
    the subcritical band and :class:`DegenerateError` when the root pattern
    does not consist of exactly one minimum and one maximum.
    """
    span = pot.sigma_max - pot.sigma_min
    margin = 1e-9 * span
    if not (pot.sigma_min + margin < sigma < pot.sigma_max - margin):
        raise RegimeError(
            f"tilt {sigma} outside subcritical range "
            f"({pot.sigma_min}, {pot.sigma_max})"
        )
    big_l = pot.period

    def f(p):
        return float(pot.d1(p)) - sigma

    edges = np.linspace(0.0, big_l, _SCAN_POINTS + 1)
    fv = np.asarray(pot.d1(edges), dtype=float) - sigma

    roots: list[float] = []
    for i in range(_SCAN_POINTS):
        if fv[i] == 0.0:
            roots.append(float(edges[i]))
            continue
        if fv[i] * fv[i + 1] < 0.0:
            a, b = float(edges[i]), float(edges[i + 1])
            fa = fv[i]
            while b - a > 1e-14:
                m = 0.5 * (a + b)
                fm = f(m)
                if fm == 0.0:
                    a = b = m
                    break
                if fa * fm < 0.0:
                    b = m
                else:
                    a, fa = m, fm
            roots.append(0.5 * (a + b))
    # Two Newton polish steps; H'' is available analytically.
    polished = []
    for r in roots:
        for _ in range(2):
            d2 = float(pot.d2(r))
            if d2 != 0.0:
                r = r - f(r) / d2
        polished.append(r % big_l)
    polished.sort()
    merged: list[float] = []
    for r in polished:
        if merged and abs(r - merged[-1]) < 1e-8 * big_l:
            raise DegenerateError("critical points coalesce; tilt too close to fold")
        merged.append(r)
    if merged and abs(merged[0] + big_l - merged[-1]) < 1e-8 * big_l:
        raise DegenerateError("critical points coalesce across the period seam")
    if len(merged) != 2:
        raise DegenerateError(
            f"expected one minimum and one maximum per period, found {len(merged)} roots"
        )
    curv = [float(pot.d2(r)) for r in merged]
    if curv[0] > 0.0 > curv[1]:
        p_min, p_max = merged[0], merged[1]
    elif curv[1] > 0.0 > curv[0]:
        p_min, p_max = merged[1], merged[0] + big_l
    else:
        raise DegenerateError("root curvatures do not form a min/max pair")
    return CriticalPoints(p_min=p_min, p_max=p_max, period=big_l)


@dataclass(frozen=True)
class KramersData:
    """Barrier heights of the tilted potential and the hop-time scale."""

    h_left: float
    h_right: float
    prefactor: float  # c_K

    def log_tau(self, nu: float) -> float:
        return math.log(self.prefactor) - min(self.h_left, self.h_right) / nu**2

    def tau(self, nu: float) -> float:
        x = min(self.h_left, self.h_right) / nu**2
        if x > EXP_FLOOR:
            raise ScaleError(
                f"exp(-{x:.1f}) underflows; Kramers scale not representable at nu={nu}"
            )
        return self.prefactor * math.exp(-x)

    def log_jump_time(self, nu: float, side: str) -> float:
        """Log of the expected hop time (in Kramers units) to one side."""
        h = {"left": self.h_left, "right": self.h_right}[side]
        return self.log_tau(nu) - math.log(self.prefactor) + h / nu**2


def barriers(pot: PeriodicPotential, sigma: float, cp: CriticalPoints) -> KramersData:
    """Barrier heights and Kramers prefactor at the given tilt."""
    v = pot.v_eff(sigma)
    v_min = float(v(cp.p_min))
    h_right = float(v(cp.p_max)) - v_min
    h_left = float(v(cp.p_max - cp.period)) - v_min
    if h_left <= 0.0 or h_right <= 0.0:
        raise DegenerateError("nonpositive barrier; critical points inconsistent")
    c_k = math.sqrt(abs(float(pot.d2(cp.p_min)) * float(pot.d2(cp.p_max)))) / (2.0 * math.pi)
    return KramersData(h_left=h_left, h_right=h_right, prefactor=c_k)
