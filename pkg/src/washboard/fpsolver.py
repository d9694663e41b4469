"""Equilibrium-preserving finite-volume evolution of the momentum marginal.

The density on a truncated momentum window evolves by dr/dt = A r / tau
with a tridiagonal generator A assembled from an exponential-fitting
(Bernoulli function) two-point flux.  That flux is the unique one exact on
discrete Gibbs states, so the scheme inherits the continuous steady states
and the free-energy decay.  No-flux boundaries conserve mass exactly.

The spatial dependence is never gridded: for product initial data
a(x) * b(p) the x-factor evolves under the unit-diffusion heat semigroup
analytically while the p-factor evolves here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erf

from .errors import ConfigError, SingularSystemError, StabilityError, UnsupportedError
from .potential import CriticalPoints, PeriodicPotential


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on [p_lo, p_hi].

    When built over a window of wells the edges coincide with the outer
    effective-potential maxima and every well spans an integer number of
    cells, so per-well masses are exact cell sums.
    """

    p_lo: float
    p_hi: float
    n_cells: int
    j_lo: Optional[int] = None
    j_hi: Optional[int] = None
    cells_per_well: Optional[int] = None

    def __post_init__(self):
        if not self.p_lo < self.p_hi:
            raise ConfigError("grid needs p_lo < p_hi")
        if self.n_cells < 1:
            raise ConfigError("grid needs at least one cell")
        if self.cells_per_well is not None:
            if self.cells_per_well < 16:
                raise ConfigError("need at least 16 cells per well")
            n_wells = self.j_hi - self.j_lo + 1
            if self.n_cells != n_wells * self.cells_per_well:
                raise ConfigError("cell count does not tile the well window")

    @property
    def h(self) -> float:
        return (self.p_hi - self.p_lo) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.p_lo + (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return self.p_lo + np.arange(self.n_cells + 1) * self.h

    @classmethod
    def for_wells(cls, cp: CriticalPoints, j_lo: int, j_hi: int,
                  cells_per_well: int = 64) -> "Grid1D":
        """Grid covering wells j_lo..j_hi, bounded by the outer maxima."""
        if j_hi < j_lo:
            raise ConfigError("empty well window")
        n_wells = j_hi - j_lo + 1
        return cls(p_lo=float(cp.maximum(j_lo - 1)),
                   p_hi=float(cp.maximum(j_hi)),
                   n_cells=n_wells * cells_per_well,
                   j_lo=j_lo, j_hi=j_hi, cells_per_well=cells_per_well)


@dataclass
class DensityField:
    """Cell-averaged probability density (units 1/length) on a Grid1D."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise ConfigError("value array does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("density values must be finite")

    def total_mass(self) -> float:
        return float(np.sum(self.values) * self.grid.h)

    def normalized(self) -> "DensityField":
        m = self.total_mass()
        if m <= 0.0:
            raise ConfigError("cannot normalize a massless density")
        return DensityField(self.grid, self.values / m)

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.values.copy())

    @classmethod
    def from_function(cls, grid: Grid1D, fn: Callable[[np.ndarray], np.ndarray],
                      normalize: bool = False) -> "DensityField":
        out = cls(grid, np.asarray(fn(grid.centers), dtype=float))
        return out.normalized() if normalize else out

    @classmethod
    def gaussian(cls, grid: Grid1D, p0: float, width: float) -> "DensityField":
        """Unit-mass Gaussian with exact cell averages (error-function tails)."""
        if width <= 0.0:
            raise ConfigError("gaussian width must be positive")
        z = (grid.edges - p0) / (width * math.sqrt(2.0))
        cell_mass = 0.5 * np.diff(erf(z))
        return cls(grid, cell_mass / grid.h).normalized()


@dataclass(frozen=True)
class SolverConfig:
    """Physical parameters and time-step policy for a density run."""

    nu: float
    sigma: float
    tau: float = 1.0
    theta: float = 1.0
    dt_init: Optional[float] = None
    dt_growth: float = 1.2
    dt_max: Optional[float] = None
    l1_tol: float = 1e-6
    debug: bool = False

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError("scheme parameter theta must lie in [1/2, 1]")
        if self.tau <= 0.0 or self.nu <= 0.0:
            raise ConfigError("tau and nu must be positive")
        if self.dt_init is not None and self.dt_init <= 0.0:
            raise ConfigError("dt_init must be positive")


def bernoulli(u):
    """B(u) = u / (e^u - 1), with the quadratic series branch near zero."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    small = np.abs(u) < 1e-4
    us = u[small]
    out[small] = 1.0 - 0.5 * us + us * us / 12.0
    ub = u[~small]
    out[~small] = ub / np.expm1(ub)
    return out


@dataclass(frozen=True)
class TridiagonalOperator:
    """Conservative tridiagonal generator; rows sum fluxes, columns sum to 0."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return len(self.diag)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = self.diag * rho
        out[1:] += self.lower * rho[:-1]
        out[:-1] += self.upper * rho[1:]
        return out

    def column_sums(self) -> np.ndarray:
        out = self.diag.copy()
        out[:-1] += self.lower
        out[1:] += self.upper
        return out


def build_generator(pot: PeriodicPotential, sigma: float, nu: float,
                    grid: Grid1D) -> TridiagonalOperator:
    """Assemble the no-flux exponential-fitting generator on the grid.

    The flux through the edge between cells i and i+1 is
    F = (nu^2/h) * (B(u) rho_i - B(-u) rho_{i+1}), u = (V_{i+1}-V_i)/nu^2,
    which vanishes identically on rho_i = exp(-V_i/nu^2).
    """
    v = pot.v_eff(sigma)(grid.centers)
    u = np.diff(v) / nu**2
    bl = bernoulli(u)
    br = bernoulli(-u)
    scale = nu**2 / grid.h**2
    lower = scale * bl
    upper = scale * br
    diag = np.zeros(grid.n_cells)
    diag[1:] -= scale * br
    diag[:-1] -= scale * bl
    return TridiagonalOperator(lower=lower, diag=diag, upper=upper)


def step(rho: DensityField, dt: float, generator: TridiagonalOperator,
         tau: float, theta: float = 1.0) -> DensityField:
    """One theta-scheme step of dr/dt = A r / tau by banded elimination."""
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    c = theta * dt / tau
    n = generator.n
    ab = np.zeros((3, n))
    ab[0, 1:] = -c * generator.upper
    ab[1, :] = 1.0 - c * generator.diag
    ab[2, :-1] = -c * generator.lower
    rhs = rho.values
    if theta < 1.0:
        rhs = rhs + ((1.0 - theta) * dt / tau) * generator.apply(rho.values)
    try:
        out = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SingularSystemError("non-finite state after implicit solve")
    return DensityField(rho.grid, out)


def l1_distance(a: DensityField, b: DensityField) -> float:
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.h)


@dataclass
class SolveResult:
    """Recorded trajectory of a density run."""

    times: list
    states: list
    records: list
    steps_accepted: int
    steps_rejected: int
    mass_drift: float

    def state_at(self, t: float, tol: float = 1e-9) -> DensityField:
        for ti, si in zip(self.times, self.states):
            if abs(ti - t) <= tol * max(1.0, abs(t)):
                return si
        raise ConfigError(f"no recorded state at t={t}")


def solve(rho0: DensityField, T: float, config: SolverConfig,
          observer_cadence: Optional[float] = None, *,
          pot: Optional[PeriodicPotential] = None,
          generator: Optional[TridiagonalOperator] = None,
          observer: Optional[Callable[[float, DensityField], object]] = None
          ) -> SolveResult:
    """Adaptive implicit evolution to time T (in units where dr/dt = Ar/tau).

    The step size starts at the intra-well stability scale, grows
    geometrically while the step-doubling L1 error estimate stays below
    tolerance, and halves on rejection.  Records land exactly on multiples
    of observer_cadence when one is given, otherwise on every accepted step.
    """
    if generator is None:
        if pot is None:
            raise ConfigError("solve needs a potential or a prebuilt generator")
        generator = build_generator(pot, config.sigma, config.nu, rho0.grid)
    if T < 0.0:
        raise ConfigError("T must be nonnegative")

    rho = rho0.copy()
    mass0 = rho.total_mass()
    times = [0.0]
    states = [rho.copy()]
    records = [observer(0.0, rho)] if observer else []
    if T == 0.0:
        return SolveResult(times, states, records, 0, 0, 0.0)

    h = rho0.grid.h
    dt = config.dt_init if config.dt_init is not None else min(
        1e-3, 0.5 * config.tau * h**2 / config.nu**2)
    dt_max = config.dt_max if config.dt_max is not None else 1e-2 * T
    dt = min(dt, dt_max)
    t = 0.0
    accepted = 0
    rejected = 0
    next_obs = observer_cadence if observer_cadence is not None else None

    while t < T * (1.0 - 1e-12):
        dt_try = min(dt, T - t)
        if next_obs is not None:
            dt_try = min(dt_try, next_obs - t)
        coarse = step(rho, dt_try, generator, config.tau, config.theta)
        half = step(rho, 0.5 * dt_try, generator, config.tau, config.theta)
        fine = step(half, 0.5 * dt_try, generator, config.tau, config.theta)
        err = l1_distance(coarse, fine)
        if err < config.l1_tol:
            rho = fine
            t += dt_try
            accepted += 1
            if config.debug and config.theta == 1.0:
                if float(np.min(rho.values)) < -1e-12:
                    raise SingularSystemError("positivity lost in debug mode")
            dt = min(dt * config.dt_growth, dt_max)
            hit_obs = next_obs is not None and t >= next_obs * (1.0 - 1e-12)
            if next_obs is None or hit_obs or t >= T * (1.0 - 1e-12):
                times.append(t)
                states.append(rho.copy())
                if observer:
                    records.append(observer(t, rho))
                if hit_obs:
                    next_obs += observer_cadence
        else:
            rejected += 1
            dt = 0.5 * dt_try
            if dt < 1e-15 * max(T, 1.0):
                raise StabilityError("time step collapsed below resolution")
    drift = abs(rho.total_mass() - mass0)
    return SolveResult(times, states, records, accepted, rejected, drift)


def heat_kernel(t: float, r, n: int = 1):
    """Unit-diffusion kernel (4 pi t)^(-n/2) exp(-r^2 / (4t)), r = |x - x0|."""
    if t <= 0.0:
        raise ConfigError("heat kernel needs t > 0")
    r = np.asarray(r, dtype=float)
    return (4.0 * math.pi * t) ** (-0.5 * n) * np.exp(-r * r / (4.0 * t))


@dataclass(frozen=True)
class GaussianProfile:
    """Analytic x-profile: isotropic Gaussian (var = 0 means a point mass)."""

    x0: float = 0.0
    var: float = 0.0
    n: int = 1

    def evolve(self, t: float) -> "GaussianProfile":
        if t < 0.0:
            raise ConfigError("cannot evolve backwards")
        return replace(self, var=self.var + 2.0 * t)

    def density(self, x):
        if self.var <= 0.0:
            raise ConfigError("point mass has no density; evolve first")
        r = np.asarray(x, dtype=float) - self.x0
        return ((2.0 * math.pi * self.var) ** (-0.5 * self.n)
                * np.exp(-r * r / (2.0 * self.var)))


@dataclass(frozen=True)
class GriddedProfile:
    """Sampled 1-D x-profile; evolves by direct kernel convolution."""

    x_nodes: np.ndarray
    values: np.ndarray

    def evolve(self, t: float) -> "GriddedProfile":
        if t < 0.0:
            raise ConfigError("cannot evolve backwards")
        if t == 0.0:
            return self
        x = np.asarray(self.x_nodes, dtype=float)
        w = np.gradient(x)  # trapezoid weights on a possibly nonuniform mesh
        kernel = heat_kernel(t, x[:, None] - x[None, :])
        return GriddedProfile(x, kernel @ (w * self.values))

    def density(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x_nodes, self.values)


@dataclass(frozen=True)
class ProductState:
    """Factored snapshot a(t, x) * b(t, p); never a full (x, p) tensor."""

    x_factor: object
    p_factor: DensityField

    def density(self, x, p):
        grid = self.p_factor.grid
        idx = np.clip(((np.asarray(p, dtype=float) - grid.p_lo) // grid.h
                       ).astype(int), 0, grid.n_cells - 1)
        return self.x_factor.density(x) * self.p_factor.values[idx]


def product_solution(x_profile, p_trajectory, t: float) -> ProductState:
    """Evolve product initial data a(x) * b(p) to time t, factor by factor.

    The x-Laplacian commutes with the momentum operator, so product data
    stays a product: the x-factor follows the unit heat flow (exactly, via
    Gaussian algebra or kernel convolution) and the p-factor follows the
    recorded density trajectory.
    """
    if np.ndim(x_profile) >= 2:
        raise UnsupportedError("joint (x, p) initial data is not supported; "
                               "supply a product a(x) * b(p)")
    if not hasattr(x_profile, "evolve"):
        raise UnsupportedError("x-profile must be analytic or gridded")
    x_factor = x_profile.evolve(t)
    if isinstance(p_trajectory, SolveResult):
        p_factor = p_trajectory.state_at(t)
    elif isinstance(p_trajectory, DensityField):
        if t != 0.0:
            raise UnsupportedError("a bare density is only valid at t = 0; "
                                   "pass a solve result for t > 0")
        p_factor = p_trajectory
    elif callable(p_trajectory):
        p_factor = p_trajectory(t)
    else:
        raise UnsupportedError("p-trajectory must be a solve result, a "
                               "density at t=0, or a callable")
    return ProductState(x_factor=x_factor, p_factor=p_factor)
