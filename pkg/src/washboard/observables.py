"""Functionals of the evolving density: masses, energy, dissipations, moments.

Everything here is a pure function of a density snapshot.  Per-well
quantities are returned as :class:`WellSequence` values indexed by the well
number.  The mass bookkeeping keeps its exact discrete identities: partial
masses telescope to the total mass, and the moment-weight masses telescope
through the partition of unity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .asymptotics import AsymptoticScalars, GibbsEvaluator
from .errors import AlignmentError, WindowError
from .fpsolver import (DensityField, Grid1D, TridiagonalOperator, bernoulli,
                       build_generator)
from .potential import CriticalPoints, PeriodicPotential
from .weights import PsiFamily, WeightPhi, build_phi, build_psi_family

# below this the density is treated as vacuum in logarithmic quantities
RHO_FLOOR = 1e-300


@dataclass(frozen=True)
class WellSequence:
    """Per-well values over a contiguous index window."""

    j_lo: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def j_hi(self) -> int:
        return self.j_lo + len(self.values) - 1

    def __getitem__(self, j: int) -> float:
        if not self.j_lo <= j <= self.j_hi:
            raise WindowError(f"well {j} outside [{self.j_lo}, {self.j_hi}]")
        return float(self.values[j - self.j_lo])

    def indices(self) -> range:
        return range(self.j_lo, self.j_hi + 1)

    def sum(self) -> float:
        return float(np.sum(self.values))

    def items(self):
        return zip(self.indices(), self.values)


def _well_window(grid: Grid1D, cp: CriticalPoints) -> Tuple[int, int]:
    """Indices of the wells tiled by the grid (boundaries at outer maxima)."""
    if grid.j_lo is not None:
        return grid.j_lo, grid.j_hi
    L = cp.period
    j_lo = int(round((grid.p_lo - cp.p_max) / L)) + 1
    j_hi = int(round((grid.p_hi - cp.p_max) / L))
    return j_lo, j_hi


def partial_masses(rho: DensityField, cp: CriticalPoints,
                   grid: Optional[Grid1D] = None) -> WellSequence:
    """Mass per well between consecutive maxima, split linearly in edge cells.

    Every well boundary must coincide with a cell edge up to rounding; the
    in-cell linear split only absorbs that rounding residual.  The returned
    masses telescope exactly to the total mass.
    """
    grid = grid if grid is not None else rho.grid
    h = grid.h
    tol = 1e-8 * h + 1e-12 * (grid.p_hi - grid.p_lo)
    j_lo, j_hi = _well_window(grid, cp)
    for j in range(j_lo - 1, j_hi + 1):
        q = float(np.clip(cp.maximum(j), grid.p_lo, grid.p_hi))
        edge_dist = abs(q - grid.p_lo - round((q - grid.p_lo) / h) * h)
        if edge_dist > tol:
            raise AlignmentError(f"well boundary at {q} does not sit on a cell edge")

    csum = np.concatenate(([0.0], np.cumsum(rho.values) * h))

    def cumulative(x: float) -> float:
        k = int(np.clip((x - grid.p_lo) // h, 0, grid.n_cells - 1))
        return float(csum[k] + rho.values[k] * (x - (grid.p_lo + k * h)))

    cuts = [grid.p_lo]
    cuts += [float(np.clip(cp.maximum(j), grid.p_lo, grid.p_hi))
             for j in range(j_lo, j_hi)]
    cuts.append(grid.p_hi)
    cvals = [cumulative(x) for x in cuts]
    cvals[0], cvals[-1] = 0.0, float(csum[-1])
    # rounding in the edge split can leave -1e-23 scraps; masses are >= 0
    return WellSequence(j_lo, np.maximum(np.diff(cvals), 0.0))


def substitute_bar(rho: DensityField, scalars: AsymptoticScalars
                   ) -> Tuple[WellSequence, Tuple[int, ...]]:
    """Well-bottom masses mbar_j = mu_j rho(P_j) / gamma(P_j).

    The relative density log(rho/gamma) is interpolated linearly between
    the two cell centers flanking P_j, which is exact whenever rho is a
    constant multiple of gamma on that well.  Wells whose flanking cells
    are both empty are reported as 0 and flagged.
    """
    cp, gibbs = scalars.cp, scalars.gibbs
    grid = rho.grid
    centers = grid.centers
    L = cp.period
    j_lo = int(math.ceil((centers[0] - cp.p_min) / L - 1e-12))
    j_hi = int(math.floor((centers[-1] - cp.p_min) / L + 1e-12))
    out = np.zeros(j_hi - j_lo + 1)
    flagged = []
    with np.errstate(divide="ignore"):
        log_rel = np.log(np.maximum(rho.values, 0.0)) - gibbs.log_gamma(centers)
    for j in range(j_lo, j_hi + 1):
        p = float(cp.minimum(j))
        k = int(np.searchsorted(centers, p))
        k = min(max(k, 1), grid.n_cells - 1)
        if rho.values[k - 1] <= 0.0 and rho.values[k] <= 0.0:
            flagged.append(j)
            continue
        w = (p - centers[k - 1]) / grid.h
        r = (1.0 - w) * log_rel[k - 1] + w * log_rel[k]
        out[j - j_lo] = math.exp(scalars.log_mu(j) + r) if np.isfinite(r) else 0.0
    return WellSequence(j_lo, out), tuple(flagged)


def substitute_tilde(rho: DensityField, psis: PsiFamily) -> WellSequence:
    """Moment-weight masses mtilde_j = integral of (psi_{j-1} - psi_j) rho.

    The window extends one well beyond the grid on each side so that the
    bumps telescope to exactly 1 on the grid and the sequence sums to the
    total mass.
    """
    grid = rho.grid
    cp = psis.cp
    j_lo, j_hi = _well_window(grid, cp)
    centers = grid.centers
    cell_mass = rho.values * grid.h
    js = range(j_lo - 1, j_hi + 2)
    vals = [float(np.dot(psis.bump(j, centers), cell_mass)) for j in js]
    return WellSequence(j_lo - 1, np.array(vals))


def energy(rho: DensityField, pot: PeriodicPotential, sigma: float,
           nu: float) -> float:
    """Free energy: entropy at temperature nu^2 plus tilted potential energy."""
    v = pot.v_eff(sigma)(rho.grid.centers)
    r = rho.values
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(r > RHO_FLOOR, r * np.log(r), 0.0)
    return float(rho.grid.h * np.sum(nu**2 * ent + v * r))


@dataclass(frozen=True)
class DissipationReport:
    """Flux-form dissipation split into intra-well and well-boundary parts,
    with the per-well relative-density form alongside."""

    interior: float
    boundary: float
    per_well: WellSequence

    @property
    def total(self) -> float:
        return self.interior + self.boundary


def _edge_fluxes(rho: DensityField, v: np.ndarray, nu: float) -> np.ndarray:
    u = np.diff(v) / nu**2
    r = rho.values
    return (nu**2 / rho.grid.h) * (bernoulli(u) * r[:-1] - bernoulli(-u) * r[1:])


def dissipation(rho: DensityField, pot: PeriodicPotential, sigma: float,
                nu: float, cp: CriticalPoints) -> DissipationReport:
    """Total and per-well dissipation of the free energy.

    The total uses the discrete edge fluxes (exactly zero on Gibbs states);
    edges sitting on well boundaries are accumulated separately so the
    intra-well part is comparable with 4 * sum of the per-well values.
    """
    grid = rho.grid
    h = grid.h
    v = pot.v_eff(sigma)(grid.centers)
    flux = _edge_fluxes(rho, v, nu)
    r = rho.values
    r_edge = 0.5 * (r[:-1] + r[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib = np.where(r_edge > RHO_FLOOR, h * (flux / nu**2) ** 2 / r_edge, 0.0)
    edges = grid.edges[1:-1]
    L = cp.period
    offs = edges - float(cp.p_max)
    at_q = np.abs(offs - np.round(offs / L) * L) < 0.5 * h
    interior = float(np.sum(contrib[~at_q]))
    boundary = float(np.sum(contrib[at_q]))

    j_lo, j_hi = _well_window(grid, cp)
    gibbs = GibbsEvaluator(pot, sigma, nu)
    log_gamma = gibbs.log_gamma(grid.centers)
    per_well = []
    for j in range(j_lo, j_hi + 1):
        lo = float(cp.maximum(j - 1))
        hi = float(cp.maximum(j))
        sel = (grid.centers > lo) & (grid.centers < hi)
        lg = log_gamma[sel]
        rj = r[sel]
        log_mu_j = _log_sum_exp(lg) + math.log(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(rj > RHO_FLOOR,
                         np.exp(0.5 * (log_mu_j + np.log(np.maximum(rj, RHO_FLOOR)) - lg)),
                         0.0)
        dw = np.gradient(w, h)
        gamma_j = np.exp(lg - log_mu_j)
        per_well.append(float(h * np.sum(dw**2 * gamma_j)))
    return DissipationReport(interior=interior, boundary=boundary,
                             per_well=WellSequence(j_lo, np.array(per_well)))


def _log_sum_exp(log_vals: np.ndarray) -> float:
    peak = float(np.max(log_vals))
    return peak + math.log(float(np.sum(np.exp(log_vals - peak))))


def dissipation_production(rho: DensityField, generator: TridiagonalOperator,
                           pot: PeriodicPotential, sigma: float, nu: float
                           ) -> float:
    """Entropy production of the discrete generator.

    Summation by parts turns the energy derivative along dr/dt = Ar into
    an edgewise nonnegative sum flux * (chemical-potential drop) / nu^4;
    this is the dissipation for which the semidiscrete energy law is exact.
    """
    grid = rho.grid
    v = pot.v_eff(sigma)(grid.centers)
    flux = _edge_fluxes(rho, v, nu)
    r = rho.values
    with np.errstate(divide="ignore"):
        mu = nu**2 * np.log(np.maximum(r, RHO_FLOOR)) + v
    ok = (r[:-1] > RHO_FLOOR) & (r[1:] > RHO_FLOOR)
    drop = mu[:-1] - mu[1:]
    return float(np.sum(np.where(ok, flux * drop, 0.0)) / nu**4)


def moments(rho: DensityField, phi: Optional[Callable] = None
            ) -> Tuple[float, float, float]:
    """First moment, winding moment, and variance of the density."""
    grid = rho.grid
    c = grid.centers
    cm = rho.values * grid.h
    m = float(np.sum(cm))
    first = float(np.dot(c, cm))
    winding = float(np.dot(np.asarray(phi(c), dtype=float), cm)) if phi else math.nan
    mean = first / m if m > 0 else 0.0
    var = float(np.dot((c - mean) ** 2, cm))
    return first, winding, var


def moment_approximation_error(rho: DensityField, v: Callable,
                               masses: WellSequence, cp: CriticalPoints
                               ) -> float:
    """|integral of v rho - sum_j m_j v(P_j)| for a smooth bounded weight."""
    grid = rho.grid
    exact = float(np.dot(np.asarray(v(grid.centers), dtype=float),
                         rho.values) * grid.h)
    lumped = sum(masses[j] * float(v(np.asarray(cp.minimum(j))))
                 for j in masses.indices())
    return abs(exact - lumped)


@dataclass(frozen=True)
class RelativeDensity:
    """Squared relative density w_j^2 = mu_j rho / gamma on one well."""

    j: int
    log_mu_j: float
    gibbs: GibbsEvaluator
    rho: DensityField
    lo: float
    hi: float

    def sq(self, p):
        p = np.asarray(p, dtype=float)
        grid = self.rho.grid
        idx = np.clip(((p - grid.p_lo) // grid.h).astype(int), 0, grid.n_cells - 1)
        r = self.rho.values[idx]
        with np.errstate(divide="ignore"):
            out = np.exp(self.log_mu_j + np.log(np.maximum(r, RHO_FLOOR))
                         - self.gibbs.log_gamma(p))
        out = np.where(r > RHO_FLOOR, out, 0.0)
        return np.where((p > self.lo) & (p < self.hi), out, 0.0)


def relative_density(rho: DensityField, scalars: AsymptoticScalars,
                     j: int) -> RelativeDensity:
    cp = scalars.cp
    return RelativeDensity(j=j, log_mu_j=scalars.log_mu(j), gibbs=scalars.gibbs,
                           rho=rho, lo=float(cp.maximum(j - 1)),
                           hi=float(cp.maximum(j)))


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One snapshot of every tracked functional."""

    t: float
    m: float
    E: float
    D: float
    D_gen: float
    D_boundary: float
    D_j: WellSequence
    P: float
    K: float
    V: float
    m_j: WellSequence
    mbar_j: WellSequence
    mtilde_j: WellSequence
    flagged: Tuple[int, ...]

    def as_flat_dict(self) -> dict:
        out = {"t": self.t, "E": self.E, "D": self.D, "D_gen": self.D_gen,
               "D_boundary": self.D_boundary, "P": self.P, "K": self.K,
               "V": self.V, "m": self.m}
        for name, seq in (("m", self.m_j), ("mbar", self.mbar_j),
                          ("mtilde", self.mtilde_j), ("Dwell", self.D_j)):
            for j, val in seq.items():
                out[f"{name}_{j}"] = float(val)
        return out


@dataclass(frozen=True)
class ObservableContext:
    """Prebuilt weights and generator for repeated snapshot evaluation."""

    pot: PeriodicPotential
    scalars: AsymptoticScalars
    grid: Grid1D
    psis: PsiFamily
    phi: Optional[WeightPhi]
    generator: TridiagonalOperator

    @classmethod
    def build(cls, pot: PeriodicPotential, scalars: AsymptoticScalars,
              grid: Grid1D, rel_tol: float = 1e-11) -> "ObservableContext":
        cp = scalars.cp
        j_lo, j_hi = _well_window(grid, cp)
        psis = build_psi_family(cp, scalars.gibbs, j_lo - 1, j_hi,
                                rel_tol=rel_tol)
        phi = None
        if j_lo - 1 <= 0 <= j_hi:
            phi = build_phi(cp, scalars.gibbs, j_lo - 1, j_hi, family=psis)
        generator = build_generator(pot, scalars.sigma, scalars.nu, grid)
        return cls(pot=pot, scalars=scalars, grid=grid, psis=psis, phi=phi,
                   generator=generator)

    def record(self, t: float, rho: DensityField) -> DiagnosticsRecord:
        sc = self.scalars
        m_j = partial_masses(rho, sc.cp)
        mbar, flagged = substitute_bar(rho, sc)
        mtilde = substitute_tilde(rho, self.psis)
        diss = dissipation(rho, self.pot, sc.sigma, sc.nu, sc.cp)
        d_gen = dissipation_production(rho, self.generator, self.pot,
                                       sc.sigma, sc.nu)
        first, winding, var = moments(rho, self.phi)
        return DiagnosticsRecord(
            t=t, m=rho.total_mass(),
            E=energy(rho, self.pot, sc.sigma, sc.nu),
            D=diss.total, D_gen=d_gen, D_boundary=diss.boundary,
            D_j=diss.per_well, P=first, K=winding, V=var,
            m_j=m_j, mbar_j=mbar, mtilde_j=mtilde, flagged=flagged)


def energy_balance_residual(record_prev: DiagnosticsRecord,
                            record_next: DiagnosticsRecord,
                            nu: float, tau: float) -> float:
    """Relative defect of tau dE/dt = -nu^4 D between two snapshots."""
    dt = record_next.t - record_prev.t
    if dt <= 0.0:
        raise ValueError("records must be time-ordered")
    d_mid = 0.5 * (record_prev.D_gen + record_next.D_gen)
    r = tau * (record_next.E - record_prev.E) / dt + nu**4 * d_mid
    if abs(r) <= 1e-12:
        # sub-roundoff defect (stationary states) reads as exactly balanced
        return 0.0
    denom = nu**4 * d_mid
    if denom == 0.0:
        return math.inf
    return r / denom
