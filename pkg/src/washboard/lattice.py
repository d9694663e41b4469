"""Limit mass-exchange dynamics on the well lattice.

In the vanishing-temperature limit the per-well masses obey a linear
exchange system: pure rightward (or leftward) transport for a nonzero
tilt, and a two-rate symmetric walk at zero tilt.  The rightward system
has the Poisson kernel as fundamental solution, so point data can be
propagated exactly; everything else integrates with a classical RK4 at a
fixed small step.  Mass that crosses the finite index window is tracked
in a sink so that the total stays conserved to rounding.

The spatial factor of product data never lives on a grid: an attached
analytic profile is pushed forward through the unit-diffusion heat
semigroup instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, GridMismatchError, MethodError
from .fpsolver import heat_kernel

_DIRECTIONS = ("right", "left", "symmetric")


def direction_for_tilt(sigma: float) -> str:
    """Transport direction implied by the sign of the tilt."""
    if sigma > 0.0:
        return "right"
    if sigma < 0.0:
        return "left"
    return "symmetric"


def window_radius(T: float) -> int:
    """Index margin that keeps the kernel tail below 1e-12 up to time T."""
    if T < 0.0:
        raise ConfigError("horizon must be nonnegative")
    return int(math.ceil(T + 10.0 * math.sqrt(T + 1.0)))


@dataclass(frozen=True)
class LatticeMassState:
    """Nonnegative masses on a contiguous index window plus an overflow sink."""

    j_min: int
    values: np.ndarray
    direction: str = "right"
    kappa: float = 1.0
    sink: float = 0.0
    x_profile: Optional[object] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ConfigError("state needs a one-dimensional mass window")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("masses must be finite")
        if self.direction not in _DIRECTIONS:
            raise ConfigError(f"unknown direction {self.direction!r}")
        if self.kappa < 0.0:
            raise ConfigError("kappa must be nonnegative")

    @property
    def j_max(self) -> int:
        return self.j_min + len(self.values) - 1

    def mass(self, j: int) -> float:
        """Mass at index j, zero outside the window."""
        if self.j_min <= j <= self.j_max:
            return float(self.values[j - self.j_min])
        return 0.0

    def total(self) -> float:
        return float(np.sum(self.values)) + self.sink

    @classmethod
    def point_mass(cls, j0: int, T: float, direction: str = "right",
                   kappa: float = 1.0) -> "LatticeMassState":
        """Unit mass at j0 on a window wide enough for horizon T."""
        r = window_radius(T)
        back = r if direction in ("left", "symmetric") else 4
        fwd = r if direction in ("right", "symmetric") else 4
        values = np.zeros(back + fwd + 1)
        values[back] = 1.0
        return cls(j_min=j0 - back, values=values, direction=direction,
                   kappa=kappa)


def _rates(values: np.ndarray, direction: str, kappa: float
           ) -> Tuple[np.ndarray, float]:
    """Window rates plus the outflow rate into the sink; they sum to zero."""
    dm = np.empty_like(values)
    if direction == "right":
        dm[0] = -values[0]
        dm[1:] = values[:-1] - values[1:]
        out = values[-1]
    elif direction == "left":
        dm[-1] = -values[-1]
        dm[:-1] = values[1:] - values[:-1]
        out = values[0]
    else:
        gain_l = np.concatenate(([0.0], values[:-1]))
        gain_r = kappa * np.concatenate((values[1:], [0.0]))
        dm = gain_l + gain_r - (1.0 + kappa) * values
        out = values[-1] + kappa * values[0]
    return dm, out


def rhs(state: LatticeMassState, kappa: Optional[float] = None) -> np.ndarray:
    """Rate of change of the window masses; sink outflow is not included."""
    k = state.kappa if kappa is None else kappa
    dm, _ = _rates(state.values, state.direction, k)
    return dm


def _poisson_row(t: float, j_hi: int) -> np.ndarray:
    """K(t, j) for j = 0..j_hi, evaluated through the log of the pmf."""
    if t == 0.0:
        row = np.zeros(j_hi + 1)
        row[0] = 1.0
        return row
    js = np.arange(j_hi + 1)
    return np.exp(js * math.log(t) - t - gammaln(js + 1.0))


def fundamental_solution(t: float, j: int, x: Optional[float] = None,
                         n: int = 1) -> float:
    """Poisson kernel in the index, optionally times the heat kernel in x."""
    if t < 0.0:
        raise ConfigError("kernel time must be nonnegative")
    if j < 0:
        pois = 0.0
    elif t == 0.0:
        pois = 1.0 if j == 0 else 0.0
    else:
        pois = float(math.exp(j * math.log(t) - t - gammaln(j + 1.0)))
    if x is None:
        return pois
    return pois * float(heat_kernel(t, np.asarray(x, dtype=float), n=n))


@dataclass(frozen=True)
class LatticeTrajectory:
    """Recorded states at an increasing sequence of times."""

    times: np.ndarray
    states: Tuple[LatticeMassState, ...]

    def state_at(self, t: float, tol: float = 1e-9) -> LatticeMassState:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(float(self.times[k]) - t) > tol:
            raise ConfigError(f"no state recorded at t={t}")
        return self.states[k]

    def final(self) -> LatticeMassState:
        return self.states[-1]


def _time_grid(T: float) -> np.ndarray:
    if T == 0.0:
        return np.array([0.0])
    dt = min(0.01, T / 100.0)
    n = max(1, int(math.ceil(T / dt - 1e-12)))
    return np.linspace(0.0, T, n + 1)


def _advanced(state: LatticeMassState, t: float) -> LatticeMassState:
    """Exact propagation by Poisson convolution (pure transport only)."""
    v0 = state.values
    if state.direction == "left":
        v0 = v0[::-1]
    row = _poisson_row(t, len(v0) - 1)
    new = np.convolve(v0, row)[:len(v0)]
    if state.direction == "left":
        new = new[::-1]
    sink = state.sink + float(np.sum(state.values) - np.sum(new))
    prof = state.x_profile
    if prof is not None and t > 0.0:
        prof = prof.evolve(t)
    return replace(state, values=new, sink=sink, x_profile=prof)


def _rk4_step(values: np.ndarray, sink: float, dt: float, direction: str,
              kappa: float) -> Tuple[np.ndarray, float]:
    k1, s1 = _rates(values, direction, kappa)
    k2, s2 = _rates(values + 0.5 * dt * k1, direction, kappa)
    k3, s3 = _rates(values + 0.5 * dt * k2, direction, kappa)
    k4, s4 = _rates(values + dt * k3, direction, kappa)
    new = values + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    new_sink = sink + (dt / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
    return new, new_sink


def integrate(state0: LatticeMassState, T: float,
              method: str = "exact-poisson") -> LatticeTrajectory:
    """Evolve a state to horizon T, recording every internal step.

    The exact method convolves the initial data with the fundamental
    solution and is only defined for pure transport; the symmetric walk
    must use rk4.
    """
    if T < 0.0:
        raise ConfigError("horizon must be nonnegative")
    times = _time_grid(T)
    if method == "exact-poisson":
        if state0.direction == "symmetric":
            raise MethodError("exact kernel exists only for pure transport")
        states = tuple(_advanced(state0, float(t)) for t in times)
    elif method == "rk4":
        states = [state0]
        vals, sink = state0.values, state0.sink
        for t_prev, t_next in zip(times[:-1], times[1:]):
            vals, sink = _rk4_step(vals, sink, float(t_next - t_prev),
                                   state0.direction, state0.kappa)
            prof = state0.x_profile
            if prof is not None and t_next > 0.0:
                prof = prof.evolve(float(t_next))
            states.append(replace(state0, values=vals, sink=sink,
                                  x_profile=prof))
        states = tuple(states)
    else:
        raise MethodError(f"unknown method {method!r}")
    return LatticeTrajectory(times=times, states=states)


def _window_of(entry) -> Tuple[int, np.ndarray]:
    if hasattr(entry, "j_min"):
        return entry.j_min, np.asarray(entry.values, dtype=float)
    if hasattr(entry, "j_lo"):
        return entry.j_lo, np.asarray(entry.values, dtype=float)
    raise GridMismatchError("series entries must carry an index window")


def _l1_gap(a, b) -> float:
    a_lo, av = _window_of(a)
    b_lo, bv = _window_of(b)
    lo = min(a_lo, b_lo)
    hi = max(a_lo + len(av), b_lo + len(bv))
    pa = np.zeros(hi - lo)
    pb = np.zeros(hi - lo)
    pa[a_lo - lo:a_lo - lo + len(av)] = av
    pb[b_lo - lo:b_lo - lo + len(bv)] = bv
    return float(np.sum(np.abs(pa - pb)))


def compare_l1(series_a: Sequence, series_b: Sequence,
               time_grid: np.ndarray) -> float:
    """Time-integrated summed L1 gap between two per-well mass series.

    Both series must be sampled on the supplied time grid; a trajectory
    whose recorded times disagree with it is rejected.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid.ndim != 1 or len(time_grid) < 2:
        raise GridMismatchError("need at least two comparison times")
    if np.any(np.diff(time_grid) <= 0.0):
        raise GridMismatchError("comparison times must increase")
    pair = []
    for series in (series_a, series_b):
        if isinstance(series, LatticeTrajectory):
            if (len(series.times) != len(time_grid)
                    or not np.allclose(series.times, time_grid,
                                       rtol=0.0, atol=1e-9)):
                raise GridMismatchError("trajectory times do not match the grid")
            series = series.states
        if len(series) != len(time_grid):
            raise GridMismatchError("series length does not match the grid")
        pair.append(series)
    gaps = np.array([_l1_gap(a, b) for a, b in zip(*pair)])
    return float(np.trapezoid(gaps, time_grid))
