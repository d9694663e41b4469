"""Langevin ensembles on the tilted washboard, with well-hop bookkeeping.

Particles follow the overdamped update

    p <- p + (sigma - H'(p)) dt / tau + sqrt(2 nu^2 dt / tau) xi,

with standard normal xi (Euler-Maruyama).  The drift is read from a dense
periodic lookup table of H', whose interpolation error (quadratic in the
table step, ~1e-9 at the default resolution) is far below statistical
noise; this keeps the hot loop free of arbitrary Python callables so it
can be compiled.

Hops use minimum-to-minimum hysteresis: a particle in well j hops only
when it first touches the neighboring minimum P_{j+1} or P_{j-1}.  Barrier
recrossings that fall back never count, matching the well-to-well
semantics of the lattice masses.  Touch detection is continuous in time:
besides endpoint crossings, a Brownian-bridge draw decides whether the
path grazed a threshold inside a step (probability
exp(-2 d0 d1 / amp^2) for endpoint distances d0, d1), which removes the
O(sqrt(dt)) undercount a discrete endpoint test would suffer.

Jump-time semantics: the classical prefactor-times-exponential prediction
c_K^{-1} e^{h/nu^2} is the expected time for a jump to one designated
neighboring well, i.e. the reciprocal per-side hop rate.  In a symmetric
landscape the first exit to either side takes half that time, so escape
statistics here report per-side rates (see :class:`HopStats`).

Randomness comes from independent bit-generator streams derived from
(seed, partition) through numpy's SeedSequence mechanism: partitions of
the ensemble draw from statistically independent streams, so a
partitioned run is reproducible bit for bit regardless of how the
partitions are scheduled, and hop logs are merged deterministically by
(time, particle).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, StabilityError
from .potential import CriticalPoints, PeriodicPotential, find_critical_points

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _njit = None

# Noise is generated in blocks of this many steps; the block split never
# changes the sample stream, only how it is buffered.
CHUNK_STEPS = 32
DRIFT_TABLE_SIZE = 16384
# bridge crossing probabilities below exp(-BRIDGE_GATE/2) are dropped
BRIDGE_GATE = 36.0


def _advance_loop(p, prev, w, up, dn, noise, unif, t0, dt, drift_dt, amp,
                  sigma, tab, inv_step, big_l, inv_l, track, hop_t, hop_i,
                  hop_a, hop_b, base_id):
    """Scalar hot loop (compiled when numba is present).

    The branch-free position sweep is kept separate from the hop scan so
    the compiler can vectorize it; hops are rare, so the scan is cheap.
    """
    n_steps, n = noise.shape
    nh = 0
    cap = hop_t.shape[0]
    m = tab.shape[0] - 1
    bridge = 2.0 / (amp * amp)
    gate = BRIDGE_GATE / bridge
    for k in range(n_steps):
        for i in range(n):
            x = p[i]
            prev[i] = x
            z = (x - big_l * math.floor(x * inv_l)) * inv_step
            j = int(z)
            if j >= m:
                j = m - 1
            f = z - j
            hp = tab[j] + f * (tab[j + 1] - tab[j])
            p[i] = x + (sigma - hp) * drift_dt + amp * noise[k, i]
        if not track:
            continue
        t = t0 + (k + 1) * dt
        for i in range(n):
            x = p[i]
            step = 0
            if x >= up[i]:
                step = 1
            elif x <= dn[i]:
                step = -1
            else:
                du = (up[i] - prev[i]) * (up[i] - x)
                dd = (prev[i] - dn[i]) * (x - dn[i])
                if du <= gate:
                    if unif[k, i] < math.exp(-(bridge * du)):
                        step = 1
                elif dd <= gate:
                    if unif[k, i] < math.exp(-(bridge * dd)):
                        step = -1
            if step != 0:
                if nh < cap:
                    hop_t[nh] = t
                    hop_i[nh] = base_id + i
                    hop_a[nh] = w[i]
                    hop_b[nh] = w[i] + step
                nh += 1
                w[i] += step
                up[i] += step * big_l
                dn[i] += step * big_l
    return nh


_advance_compiled = _njit(cache=True)(_advance_loop) if _njit else None


def _advance_vectorized(p, prev, w, up, dn, noise, unif, t0, dt, drift_dt,
                        amp, sigma, tab, inv_step, big_l, inv_l, track,
                        hop_t, hop_i, hop_a, hop_b, base_id):
    """Pure-numpy fallback with the same buffer protocol as the hot loop.

    Arithmetic mirrors the scalar loop operation for operation (separate
    in-place updates, libm exp for bridge draws) so both backends produce
    bitwise-identical ensembles.
    """
    n_steps, _ = noise.shape
    nh = 0
    cap = hop_t.shape[0]
    m = tab.shape[0] - 1
    bridge = 2.0 / (amp * amp)
    gate = BRIDGE_GATE / bridge
    for k in range(n_steps):
        prev[:] = p
        z = (p - big_l * np.floor(p * inv_l)) * inv_step
        j = np.minimum(z.astype(np.int64), m - 1)
        f = z - j
        hp = tab[j] + f * (tab[j + 1] - tab[j])
        # two separate updates keep the rounding identical to the scalar loop
        p += (sigma - hp) * drift_dt
        p += amp * noise[k]
        if not track:
            continue
        t = t0 + (k + 1) * dt
        hit_up = p >= up
        hit_dn = (p <= dn) & ~hit_up
        inside = ~(hit_up | hit_dn)
        du = (up - prev) * (up - p)
        dd = (prev - dn) * (p - dn)
        cand = inside & ((du <= gate) | (dd <= gate))
        for i in np.nonzero(cand)[0]:
            if du[i] <= gate:
                if unif[k, i] < math.exp(-(bridge * du[i])):
                    hit_up[i] = True
            elif unif[k, i] < math.exp(-(bridge * dd[i])):
                hit_dn[i] = True
        for idx, step_dir in ((np.nonzero(hit_up)[0], 1),
                              (np.nonzero(hit_dn)[0], -1)):
            for i in idx:
                if nh < cap:
                    hop_t[nh] = t
                    hop_i[nh] = base_id + i
                    hop_a[nh] = w[i]
                    hop_b[nh] = w[i] + step_dir
                nh += 1
                w[i] += step_dir
                up[i] += step_dir * big_l
                dn[i] += step_dir * big_l
    return nh


HOP_DTYPE = np.dtype([("time", np.float64), ("particle", np.int64),
                      ("from_well", np.int64), ("to_well", np.int64)])


@dataclass
class Ensemble:
    """Final particle state plus the full hop log and requested snapshots."""

    positions: np.ndarray
    wells: Optional[np.ndarray]
    hops: np.ndarray  # structured HOP_DTYPE, sorted by (time, particle)
    snapshots: tuple  # ((time, positions-copy), ...) in time order
    seed: int
    dt: float
    tau: float
    T: float
    sigma: float
    nu: float
    n_particles: int
    partitions: int = 1

    def __post_init__(self):
        if not np.all(np.isfinite(self.positions)):
            raise ConfigError("ensemble positions are not finite")
        if len(self.hops) > 1 and np.any(np.diff(self.hops["time"]) < 0.0):
            raise ConfigError("hop log is not time-ordered")


def _dt_ceiling(tau: float, nu: float, zeta: float) -> float:
    return 0.01 * tau * min(1.0, nu * nu / zeta)


def simulate(pot: PeriodicPotential, sigma: float, nu: float, tau: float,
             n_particles: int, T: float, dt: float, seed: int, *,
             start=None, partitions: int = 1,
             snapshot_times: Sequence[float] = (),
             track_hops: bool = True, backend: str = "auto") -> Ensemble:
    """Run an Euler-Maruyama ensemble and log minimum-to-minimum hops.

    ``dt`` must respect the documented ceiling 0.01 * tau * min(1, nu^2/zeta)
    so that a single step can neither skip a well nor distort the noise
    balance.  Hop tracking needs the subcritical critical points; ballistic
    runs pass ``track_hops=False``.  ``snapshot_times`` are rounded to step
    boundaries and never perturb the noise stream.
    """
    if n_particles < 1:
        raise ConfigError("need at least one particle")
    if T <= 0.0 or dt <= 0.0 or tau <= 0.0:
        raise ConfigError("T, dt, and tau must be positive")
    if nu <= 0.0:
        raise ConfigError("nu must be positive")
    if partitions < 1 or partitions > n_particles:
        raise ConfigError("partitions must lie in [1, n_particles]")
    if seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    ceiling = _dt_ceiling(tau, nu, pot.zeta)
    if dt > ceiling * (1.0 + 1e-12):
        raise StabilityError(
            f"dt={dt:.3g} exceeds the stability ceiling {ceiling:.3g} "
            f"= 0.01 tau min(1, nu^2/zeta)"
        )
    if backend == "auto":
        kernel = _advance_compiled or _advance_vectorized
    elif backend == "compiled":
        if _advance_compiled is None:
            raise ConfigError("compiled backend requested but unavailable")
        kernel = _advance_compiled
    elif backend == "vectorized":
        kernel = _advance_vectorized
    else:
        raise ConfigError(f"unknown backend {backend!r}")

    big_l = pot.period
    cp = find_critical_points(pot, sigma) if track_hops else None
    if start is None:
        start = cp.p_min if cp is not None else 0.0
    start_arr = np.broadcast_to(np.asarray(start, dtype=float),
                                (n_particles,)).copy()

    n_steps = int(math.ceil(T / dt - 1e-9))
    t_end = n_steps * dt
    snap_steps = sorted({int(round(t / dt)) for t in snapshot_times})
    if snap_steps and (snap_steps[0] < 0 or snap_steps[-1] > n_steps):
        raise ConfigError("snapshot times outside the run window")

    # Dense periodic table of H'; endpoint pinned for exact wrap.
    xs = np.linspace(0.0, big_l, DRIFT_TABLE_SIZE + 1)
    tab = np.asarray(pot.d1(xs), dtype=float)
    tab[-1] = tab[0]
    inv_step = DRIFT_TABLE_SIZE / big_l

    drift_dt = dt / tau
    amp = math.sqrt(2.0 * nu * nu * dt / tau)
    bounds = np.linspace(0, n_particles, partitions + 1).astype(int)

    all_hops = []
    snap_buf = {k: np.empty(n_particles) for k in snap_steps}
    positions = np.empty(n_particles)
    wells = np.empty(n_particles, dtype=np.int64) if track_hops else None

    for part in range(partitions):
        lo, hi = int(bounds[part]), int(bounds[part + 1])
        n_p = hi - lo
        if n_p == 0:
            continue
        # separate streams for displacements and bridge draws, so snapshot
        # boundaries and hop tracking never re-interleave the noise
        gen = np.random.Generator(np.random.SFC64(
            np.random.SeedSequence(entropy=seed, spawn_key=(part, 0))))
        gen_u = np.random.Generator(np.random.SFC64(
            np.random.SeedSequence(entropy=seed, spawn_key=(part, 1))))
        p = start_arr[lo:hi].copy()
        if track_hops:
            w = np.floor((p - cp.p_max) / big_l).astype(np.int64) + 1
            up = cp.p_min + (w + 1) * big_l
            dn = cp.p_min + (w - 1) * big_l
        else:
            w = np.zeros(n_p, dtype=np.int64)
            up = np.full(n_p, np.inf)
            dn = np.full(n_p, -np.inf)
        cap = 8 * n_p + 4096
        hop_t = np.empty(cap)
        hop_i = np.empty(cap, dtype=np.int64)
        hop_a = np.empty(cap, dtype=np.int64)
        hop_b = np.empty(cap, dtype=np.int64)
        prev = np.empty(n_p)
        no_unif = np.empty((0, n_p))

        if 0 in snap_buf:
            snap_buf[0][lo:hi] = p
        cur = 0
        pending = [k for k in snap_steps if k > 0]
        while cur < n_steps:
            stop = min(cur + CHUNK_STEPS, n_steps)
            if pending and pending[0] <= stop:
                stop = pending[0]
            noise = gen.standard_normal((stop - cur, n_p))
            unif = gen_u.random((stop - cur, n_p)) if track_hops else no_unif
            nh = kernel(p, prev, w, up, dn, noise, unif, cur * dt, dt,
                        drift_dt, amp, sigma, tab, inv_step, big_l,
                        1.0 / big_l, track_hops, hop_t, hop_i, hop_a,
                        hop_b, lo)
            if nh > cap:
                raise StabilityError(
                    "hop rate exceeded the log buffer; the time step is "
                    "too coarse for this landscape")
            if nh:
                rec = np.empty(nh, dtype=HOP_DTYPE)
                rec["time"] = hop_t[:nh]
                rec["particle"] = hop_i[:nh]
                rec["from_well"] = hop_a[:nh]
                rec["to_well"] = hop_b[:nh]
                all_hops.append(rec)
            cur = stop
            if pending and pending[0] == cur:
                snap_buf[cur][lo:hi] = p
                pending.pop(0)
        positions[lo:hi] = p
        if track_hops:
            wells[lo:hi] = w

    if all_hops:
        hops = np.concatenate(all_hops)
        hops = hops[np.lexsort((hops["particle"], hops["time"]))]
    else:
        hops = np.empty(0, dtype=HOP_DTYPE)
    snapshots = tuple((k * dt, snap_buf[k]) for k in snap_steps)
    return Ensemble(positions=positions, wells=wells, hops=hops,
                    snapshots=snapshots, seed=seed, dt=dt, tau=tau,
                    T=t_end, sigma=sigma, nu=nu, n_particles=n_particles,
                    partitions=partitions)


@dataclass(frozen=True)
class HopStats:
    """Hop counts and per-side jump-time estimates for one ensemble.

    The per-side jump time is observed particle-time divided by the hop
    count to that side (reciprocal rate estimator).  ``mean_jump_time`` with
    ``side="both"`` averages the two sides, which in a symmetric landscape
    estimates the same per-neighbor time with twice the statistics; the
    first exit to either side would take half as long.
    """

    n_hops: int
    n_right: int
    n_left: int
    observed_time: float

    @property
    def right_fraction(self) -> float:
        if self.n_hops == 0:
            raise ConfigError("no hops recorded")
        return self.n_right / self.n_hops

    def mean_jump_time(self, side: str = "both") -> float:
        counts = {"right": self.n_right, "left": self.n_left,
                  "both": 0.5 * self.n_hops}
        if side not in counts:
            raise ConfigError(f"unknown side {side!r}")
        if counts[side] == 0:
            raise ConfigError(f"no hops recorded toward {side!r}")
        return self.observed_time / counts[side]


def hop_statistics(ensemble: Ensemble) -> HopStats:
    delta = ensemble.hops["to_well"] - ensemble.hops["from_well"]
    n_right = int(np.sum(delta > 0))
    return HopStats(
        n_hops=len(ensemble.hops), n_right=n_right,
        n_left=len(ensemble.hops) - n_right,
        observed_time=ensemble.n_particles * ensemble.T,
    )


class Occupation(NamedTuple):
    """Empirical well-occupation fractions at one instant."""

    time: float
    wells: np.ndarray
    fractions: np.ndarray


def occupation_histogram(ensemble: Ensemble, cp: CriticalPoints,
                         times: Optional[Sequence[float]] = None
                         ) -> list[Occupation]:
    """Classify snapshot positions into wells and normalize the counts.

    Classification is by position between adjacent effective-potential
    maxima (well j spans (Q_{j-1}, Q_j)); a particle in transit past the
    barrier counts toward the well it currently sits in.
    """
    wanted = ([float(t) for t in times] if times is not None
              else [t for t, _ in ensemble.snapshots])
    out = []
    for t in wanted:
        match = [pos for ts, pos in ensemble.snapshots
                 if abs(ts - t) <= 1e-9 * max(1.0, abs(t))]
        if not match:
            raise ConfigError(f"no snapshot recorded at t={t}")
        j = np.floor((match[0] - cp.p_max) / cp.period).astype(np.int64) + 1
        js, counts = np.unique(j, return_counts=True)
        out.append(Occupation(time=t, wells=js,
                              fractions=counts / len(match[0])))
    return out
