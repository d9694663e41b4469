"""Command-line driver for the washboard experiments.

Nine subcommands cover the scalar tables (``asymptotics``), the weight
functions (``weights``), the density evolution (``solve``), the hopping
process (``lattice``), the PDE-vs-lattice discrepancy at one noise level
(``compare``) and across a descending noise sweep (``sweep``), the
two-well relaxation (``doublewell``), the running-state drift check
(``supercritical``), and the particle ensemble (``mc``).

Every subcommand reads one declarative configuration document plus
``--set key=value`` overrides and dedicated flags, writes its artifacts
into the output directory, and drops a ``run.json`` holding the library
versions, the configuration echo with its hash, and the seeds, which is
enough to replay the run bit for bit.  Exit codes: 0 on success, 2 for
configuration problems, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from .asymptotics import (
    AsymptoticScalars,
    GibbsEvaluator,
    compute_scalars,
    local_equilibrium,
)
from .config import (
    InitSpec,
    RunConfig,
    apply_overrides,
    dumps_17g,
    fmt_float,
    from_mapping,
    load_document,
    read_columns,
    run_record,
    write_csv,
    write_json,
)
from .doublewell import (
    DoubleWellPotential,
    dw_dissipation,
    dw_grid,
    dw_limit_ode,
    dw_mode_for,
    dw_partial_masses,
    dw_scalars,
    dw_substitute_masses,
    dw_weight_psi,
)
from .errors import ConfigError, WashboardError
from .fpsolver import (
    DensityField,
    GaussianProfile,
    Grid1D,
    SolverConfig,
    solve,
)
from .lattice import (
    LatticeMassState,
    compare_l1,
    direction_for_tilt,
    integrate,
)
from .observables import ObservableContext, energy, partial_masses, substitute_tilde
from .potential import PeriodicPotential, barriers, find_critical_points
from .sdemc import occupation_histogram, simulate
from .supercritical import ballistic_check


# ------------------------------------------------------------ configuration

_FLAG_KEYS = (
    ("sigma", "sigma"),
    ("nu", "nu"),
    ("seed", "seed"),
    ("out", "output"),
    ("init", "init"),
    ("T", "solver.T"),
    ("wells", "solver.wells"),
    ("cells_per_well", "solver.cells_per_well"),
    ("n_cells", "solver.n_cells"),
    ("cadence", "solver.cadence"),
    ("particles", "solver.particles"),
    ("dt", "solver.dt"),
    ("method", "solver.method"),
    ("direction", "solver.direction"),
    ("kappa", "solver.kappa"),
)


def _potential_block_text(spec: str) -> str:
    """Flag syntax 'kind[:args]' rendered as a flow-style mapping."""
    kind, _, rest = spec.partition(":")
    if kind == "cosine":
        if rest:
            raise ConfigError("cosine potential takes no arguments")
        return "{kind: cosine}"
    if kind == "g_of_sin":
        a, sep, b = rest.partition(",")
        if not sep:
            raise ConfigError("g_of_sin potential needs 'g_of_sin:a,b'")
        return f"{{kind: g_of_sin, a: {a}, b: {b}}}"
    if kind == "table":
        if not rest:
            raise ConfigError("table potential needs 'table:file'")
        return f"{{kind: table, file: {rest}}}"
    if kind == "doublewell":
        return _doublewell_block_text(rest)
    raise ConfigError(f"unknown potential spec {spec!r}")


def _doublewell_block_text(params: str) -> str:
    entries = ["kind: doublewell"]
    if params:
        for pair in params.split(","):
            key, sep, value = pair.partition("=")
            if not sep:
                raise ConfigError(f"malformed well parameter {pair!r}")
            entries.append(f"{key.strip()}: {value.strip()}")
    return "{" + ", ".join(entries) + "}"


def _flag_overrides(args: argparse.Namespace) -> list[str]:
    out: list[str] = []
    if getattr(args, "potential", None) is not None:
        out.append("potential=" + _potential_block_text(args.potential))
    for attr, key in _FLAG_KEYS:
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    nus = getattr(args, "nus", None)
    if nus is not None:
        out.append("nus=[" + ", ".join(nus.split(",")) + "]")
    return out


def _config_for(args: argparse.Namespace,
                forced: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """File document, then --set pairs, then dedicated flags, then the
    regime the subcommand itself implies."""
    data = load_document(args.config) if args.config else {}
    data = apply_overrides(data, list(args.set) + _flag_overrides(args))
    for key, value in (forced or {}).items():
        if key == "potential":
            block = data.get("potential")
            if not isinstance(block, Mapping) or block.get("kind") != value["kind"]:
                data["potential"] = dict(value)
        elif key == "init":
            data.setdefault("init", value)
        elif key.startswith("solver."):
            block = data.setdefault("solver", {})
            if isinstance(block, dict):
                block.setdefault(key.partition(".")[2], value)
        else:
            data[key] = value
    return from_mapping(data)


def _require_regime(config: RunConfig, regime: str, command: str) -> None:
    if config.regime != regime:
        raise ConfigError(f"the {command} command runs in the {regime} "
                          f"regime, but the configuration says {config.regime!r}")


def _periodic_frame(config: RunConfig, nu: float):
    """Potential, critical points, and scalars of a subcritical run."""
    pot = config.make_potential()
    cp = find_critical_points(pot, config.sigma)
    kd = barriers(pot, config.sigma, cp)
    sc = compute_scalars(pot, config.sigma, nu, cp=cp, kd=kd,
                         time_scale=config.solver.time_scale)
    return pot, cp, sc


def _scalars_record(sc: AsymptoticScalars) -> dict:
    return {
        "sigma": sc.sigma, "nu": sc.nu,
        "log_mu0": sc.log_mu0, "log_eta0": sc.log_eta0,
        "log_kappa": sc.log_kappa, "log_tau": sc.log_tau,
        "kappa": sc.kappa, "theta": sc.theta,
        "critical_points": {"p_min": sc.cp.p_min, "p_max": sc.cp.p_max,
                            "period": sc.cp.period},
        "barriers": {"h_left": sc.kd.h_left, "h_right": sc.kd.h_right,
                     "prefactor": sc.kd.prefactor},
    }


def _periodic_initial_state(spec: InitSpec, grid: Grid1D,
                            sc: AsymptoticScalars,
                            gibbs: GibbsEvaluator) -> DensityField:
    if spec.kind == "gibbs-well":
        if not (grid.j_lo is not None
                and grid.j_lo <= spec.well <= grid.j_hi):
            raise ConfigError(f"initial well {spec.well} outside the grid "
                              f"window [{grid.j_lo}, {grid.j_hi}]")
        leq = local_equilibrium(sc, gibbs, spec.well)
        return DensityField.from_function(grid, leq, normalize=True)
    if spec.kind == "gaussian":
        return DensityField.gaussian(grid, spec.p0, spec.width).normalized()
    if spec.kind == "table":
        p, rho = read_columns(spec.file, 2)
        values = np.interp(grid.centers, p, rho)
        return DensityField(grid, values).normalized()
    raise ConfigError(f"initial data {spec.label()!r} does not describe "
                      "a density")


# ------------------------------------------------------------- asymptotics

def _cmd_asymptotics(args: argparse.Namespace) -> int:
    config = _config_for(args)
    _require_regime(config, "subcritical", "asymptotics")
    pot, cp, sc = _periodic_frame(config, config.nu)
    payload = {
        "sigma": sc.sigma, "nu": sc.nu,
        "P0": cp.p_min, "Q0": cp.p_max,
        "hL": sc.kd.h_left, "hR": sc.kd.h_right, "cK": sc.kd.prefactor,
        "tau": sc.tau(),
        "log_mu0": sc.log_mu0, "log_eta0": sc.log_eta0,
        "kappa": sc.kappa, "theta": sc.theta,
    }
    out = Path(config.output)
    write_json(out / "asymptotics.json", payload)
    write_json(out / "run.json", run_record(config))
    sys.stdout.write(dumps_17g(payload))
    return 0


# ------------------------------------------------------------------ weights

def _cmd_weights(args: argparse.Namespace) -> int:
    config = _config_for(args)
    _require_regime(config, "subcritical", "weights")
    pot, cp, sc = _periodic_frame(config, config.nu)
    j = config.solver.wells
    grid = Grid1D.for_wells(cp, -j, j, config.solver.cells_per_well)
    ctx = ObservableContext.build(pot, sc, grid)
    p = grid.centers
    columns = {"p": p}
    for jj in sorted(ctx.psis.members):
        columns[f"psi_{jj}"] = np.asarray(ctx.psis.members[jj](p), dtype=float)
    if ctx.phi is not None:
        columns["phi"] = np.asarray(ctx.phi(p), dtype=float)
    dump = Path(args.dump) if args.dump else Path(config.output) / "weights.csv"
    write_csv(dump, list(columns),
              zip(*(columns[name] for name in columns)))
    write_json(Path(config.output) / "run.json", run_record(config))
    print(f"wrote {dump} ({len(p)} rows, {len(columns)} columns)")
    return 0


# -------------------------------------------------------------------- solve

def _select_columns(available: Sequence[str], selectors: Sequence[str]
                    ) -> list[str]:
    keep = ["t"]
    for name in selectors:
        match = [c for c in available
                 if c == name or c.startswith(name + "_")]
        if not match:
            raise ConfigError(f"unknown observable {name!r}; have "
                              f"{sorted(set(c.split('_')[0] for c in available))}")
        keep.extend(c for c in match if c not in keep)
    return keep


def _cmd_solve(args: argparse.Namespace) -> int:
    config = _config_for(args)
    _require_regime(config, "subcritical", "solve")
    pot, cp, sc = _periodic_frame(config, config.nu)
    settings = config.solver
    grid = Grid1D.for_wells(cp, -settings.wells, settings.wells,
                            settings.cells_per_well)
    gibbs = GibbsEvaluator(pot, config.sigma, config.nu)
    rho0 = _periodic_initial_state(config.init_spec(), grid, sc, gibbs)
    ctx = ObservableContext.build(pot, sc, grid)
    cadence = settings.cadence or settings.T / 100.0
    solver = SolverConfig(nu=config.nu, sigma=config.sigma, tau=sc.tau(),
                          theta=settings.theta, l1_tol=settings.l1_tol)
    result = solve(rho0, settings.T, solver, observer_cadence=cadence,
                   pot=pot, observer=ctx.record)

    out = Path(config.output)
    density_index = []
    for k, (t, state) in enumerate(zip(result.times, result.states)):
        name = f"density_{k:04d}.csv"
        write_csv(out / name, ["p", "rho"], zip(grid.centers, state.values))
        density_index.append({"file": name, "t": float(t)})

    flats = [rec.as_flat_dict() for rec in result.records]
    columns = list(flats[0]) if flats else ["t"]
    if args.observables:
        columns = _select_columns(columns, args.observables.split(","))
    write_csv(out / "diagnostics.csv", columns,
              ([flat[c] for c in columns] for flat in flats))

    write_json(out / "run.json", run_record(config, extra={
        "scalars": _scalars_record(sc),
        "diagnostics_version": 1,
        "diagnostics_columns": columns,
        "densities": density_index,
        "steps_accepted": result.steps_accepted,
        "steps_rejected": result.steps_rejected,
        "mass_drift": result.mass_drift,
    }))
    print(f"evolved to T={fmt_float(settings.T)} in {result.steps_accepted} "
          f"steps; mass drift {fmt_float(result.mass_drift)}; "
          f"{len(density_index)} density snapshots in {out}")
    return 0


# ------------------------------------------------------------------ lattice

def _lattice_initial_state(spec: InitSpec, T: float, direction: str,
                           kappa: float) -> LatticeMassState:
    if spec.kind == "point":
        return LatticeMassState.point_mass(spec.well, T, direction, kappa)
    if spec.kind == "table":
        j, mass = read_columns(spec.file, 2)
        j_int = np.rint(j).astype(int)
        if np.any(np.abs(j - j_int) > 1e-9) or np.any(np.diff(j_int) != 1):
            raise ConfigError("lattice table needs consecutive integer sites")
        return LatticeMassState(j_min=int(j_int[0]), values=mass,
                                direction=direction, kappa=kappa)
    raise ConfigError(f"initial data {spec.label()!r} does not describe "
                      "lattice masses; use point:j or table:file")


def _cmd_lattice(args: argparse.Namespace) -> int:
    config = _config_for(args)
    settings = config.solver
    direction = settings.direction or "right"
    kappa = 1.0 if settings.kappa is None else settings.kappa
    state0 = _lattice_initial_state(config.init_spec(), settings.T,
                                    direction, kappa)
    if args.x_var is not None:
        if args.x_var < 0.0:
            raise ConfigError("initial x-variance must be nonnegative")
        state0 = LatticeMassState(
            j_min=state0.j_min, values=state0.values, direction=direction,
            kappa=kappa, sink=state0.sink,
            x_profile=GaussianProfile(x0=0.0, var=args.x_var))
    trajectory = integrate(state0, settings.T, settings.method)

    header = ["t", "sink"] + [f"m_{j}" for j in
                              range(state0.j_min,
                                    state0.j_min + len(state0.values))]
    if state0.x_profile is not None:
        header.append("x_var")
    rows = []
    for t, state in zip(trajectory.times, trajectory.states):
        row = [float(t), state.sink] + [float(v) for v in state.values]
        if state0.x_profile is not None:
            row.append(state.x_profile.var)
        rows.append(row)
    out = Path(config.output)
    write_csv(out / "lattice.csv", header, rows)
    write_json(out / "run.json", run_record(config, extra={
        "direction": direction, "kappa": kappa, "method": settings.method,
    }))
    print(f"integrated {len(trajectory.times)} states "
          f"({direction}, kappa={fmt_float(kappa)}) into {out}/lattice.csv")
    return 0


# -------------------------------------------------------- compare and sweep

def _discrepancy_for(config: RunConfig, nu: float) -> float:
    """Time-integrated L1 gap between PDE well masses and the lattice flow.

    Both series are sampled on the lattice integrator's recording grid;
    the density run records on the same cadence so every comparison time
    has an exactly matching snapshot.
    """
    pot, cp, sc = _periodic_frame(config, nu)
    settings = config.solver
    grid = Grid1D.for_wells(cp, -settings.wells, settings.wells,
                            settings.cells_per_well)
    gibbs = GibbsEvaluator(pot, config.sigma, nu)
    rho0 = _periodic_initial_state(config.init_spec(), grid, sc, gibbs)
    ctx = ObservableContext.build(pot, sc, grid)

    mtilde0 = substitute_tilde(rho0, ctx.psis)
    direction = direction_for_tilt(config.sigma)
    method = "rk4" if direction == "symmetric" else settings.method
    state0 = LatticeMassState(j_min=mtilde0.j_lo, values=mtilde0.values,
                              direction=direction, kappa=sc.kappa)
    trajectory = integrate(state0, settings.T, method)

    cadence = float(trajectory.times[1] - trajectory.times[0])
    solver = SolverConfig(nu=nu, sigma=config.sigma, tau=sc.tau(),
                          theta=settings.theta, l1_tol=settings.l1_tol)
    result = solve(rho0, settings.T, solver, observer_cadence=cadence, pot=pot)
    pde_series = [partial_masses(result.state_at(float(t)), cp)
                  for t in trajectory.times]
    return compare_l1(pde_series, trajectory, trajectory.times)


def run_convergence_study(config: RunConfig) -> list[dict]:
    """Discrepancy table over a descending noise sweep.

    Returns one row per noise level with the time-integrated L1 error and
    the order fitted between consecutive levels (None on the first row).
    Requires at least three strictly descending values so that two
    consecutive orders exist to expose the trend.
    """
    nus = config.nus
    if len(nus) < 3:
        raise ConfigError("a convergence study needs at least three nu "
                          "values; use the compare command for a single one")
    if any(a <= b for a, b in zip(nus, nus[1:])):
        raise ConfigError("nu values must be strictly descending")
    _require_regime(config, "subcritical", "sweep")

    workers = min(len(nus), 4)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        errors = list(pool.map(lambda nu: _discrepancy_for(config, nu), nus))

    rows: list[dict] = []
    for k, (nu, err) in enumerate(zip(nus, errors)):
        order = None
        if k > 0:
            order = math.log(errors[k - 1] / err) / math.log(nus[k - 1] / nu)
        rows.append({"nu": nu, "error": err, "order": order})
    return rows


def _cmd_compare(args: argparse.Namespace) -> int:
    # The discrepancy experiment clocks both flows by the exact expected
    # hop time; the Laplace-approximate scale would bury the trend under
    # its own O(nu^2) rate defect.
    config = _config_for(args, {"solver.time_scale": "refined"})
    _require_regime(config, "subcritical", "compare")
    error = _discrepancy_for(config, config.nu)
    out = Path(config.output)
    write_csv(out / "compare.csv", ["nu", "l1_error"],
              [[config.nu, error]])
    write_json(out / "run.json", run_record(config, extra={
        "l1_error": error,
    }))
    print(f"nu={fmt_float(config.nu)}  L1 discrepancy={fmt_float(error)}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_for(args, {"solver.time_scale": "refined"})
    rows = run_convergence_study(config)
    out = Path(config.output)
    write_csv(out / "convergence.csv", ["nu", "l1_error", "order"],
              [[r["nu"], r["error"],
                "" if r["order"] is None else fmt_float(r["order"])]
               for r in rows])
    write_json(out / "run.json", run_record(config, extra={
        "table": [{"nu": r["nu"], "error": r["error"],
                   "order": r["order"]} for r in rows],
    }))
    for r in rows:
        order = "-" if r["order"] is None else fmt_float(r["order"])
        print(f"nu={fmt_float(r['nu'])}  error={fmt_float(r['error'])}  "
              f"order={order}")
    return 0


# --------------------------------------------------------------- doublewell

def _doublewell_initial_state(spec: InitSpec, pot: DoubleWellPotential,
                              nu: float, grid: Grid1D) -> DensityField:
    if spec.kind == "gibbs-well":
        if spec.well not in (-1, 1):
            raise ConfigError("two-well initial data takes gibbs-well:-1 "
                              "(left) or gibbs-well:1 (right)")
        log_g = -pot.evaluate(grid.centers) / nu**2
        side = grid.centers < 0.0 if spec.well < 0 else grid.centers > 0.0
        values = np.where(side, np.exp(log_g - log_g.max()), 0.0)
        return DensityField(grid, values).normalized()
    if spec.kind == "gaussian":
        return DensityField.gaussian(grid, spec.p0, spec.width).normalized()
    if spec.kind == "table":
        p, rho = read_columns(spec.file, 2)
        return DensityField(grid, np.interp(grid.centers, p, rho)).normalized()
    raise ConfigError(f"initial data {spec.label()!r} does not describe "
                      "a density")


def _cmd_doublewell(args: argparse.Namespace) -> int:
    forced: dict = {"regime": "doublewell", "sigma": 0.0,
                    "potential": {"kind": "doublewell"},
                    "init": "gibbs-well:-1"}
    if args.family == "symmetric-quartic":
        if args.params:
            raise ConfigError("the symmetric-quartic well takes no parameters")
    elif args.params:
        args.potential = "doublewell:" + args.params
    config = _config_for(args, forced)
    pot = config.make_potential()
    nu = config.nu
    settings = config.solver
    sc = dw_scalars(pot, nu)
    grid = dw_grid(pot, nu, settings.n_cells)
    psi = dw_weight_psi(pot, nu)
    rho0 = _doublewell_initial_state(config.init_spec(), pot, nu, grid)

    cadence = settings.cadence or settings.T / 100.0
    solver = SolverConfig(nu=nu, sigma=0.0, tau=sc.tau(),
                          theta=settings.theta, l1_tol=settings.l1_tol)

    def observe(t: float, rho: DensityField):
        m_minus, m_plus = dw_partial_masses(rho)
        masses = dw_substitute_masses(rho, sc, pot, psi)
        return (t, m_minus, m_plus, masses, energy(rho, pot, 0.0, nu),
                dw_dissipation(rho, pot, nu))

    result = solve(rho0, settings.T, solver, observer_cadence=cadence,
                   pot=pot, observer=observe)

    out = Path(config.output)
    header = ["t", "m_minus", "m_plus", "mbar_minus", "mbar_plus",
              "mtilde_minus", "mtilde_plus", "E", "D"]
    rows = [[t, m_minus, m_plus, masses.mbar_minus, masses.mbar_plus,
             masses.mtilde_minus, masses.mtilde_plus, e, d]
            for t, m_minus, m_plus, masses, e, d in result.records]
    write_csv(out / "diagnostics.csv", header, rows)

    mode = dw_mode_for(pot)
    m0_minus = result.records[0][3].mtilde_minus
    reference = dw_limit_ode(m0_minus, settings.T, mode=mode, pot=pot)
    write_csv(out / "ode_reference.csv", ["t", "m_minus", "m_plus"],
              zip(reference.times, reference.m_minus, reference.m_plus))

    write_json(out / "run.json", run_record(config, extra={
        "mode": mode,
        "scalars": {"nu": sc.nu, "log_mu_minus": sc.log_mu_minus,
                    "log_mu_plus": sc.log_mu_plus, "log_eta": sc.log_eta,
                    "log_tau": sc.log_tau, "theta": sc.theta},
        "mass_drift": result.mass_drift,
    }))
    print(f"two-well relaxation ({mode}) to T={fmt_float(settings.T)}: "
          f"{len(rows)} records in {out}")
    return 0


# ------------------------------------------------------------ supercritical

def _cmd_supercritical(args: argparse.Namespace) -> int:
    config = _config_for(args, {"regime": "supercritical"})
    pot = config.make_potential()
    settings = config.solver
    check = ballistic_check(pot, config.sigma, config.nu, settings.T,
                            n_cells=settings.n_cells, dt=settings.dt,
                            cadence=settings.cadence)
    out = Path(config.output)
    write_csv(out / "trajectory.csv", ["t", "P", "winding"],
              zip(check.times, check.positions, check.windings))
    summary = {
        "lambda_quadrature": check.lambda_quadrature,
        "lambda_measured": check.lambda_measured,
        "rel_err": check.rel_err,
    }
    write_json(out / "summary.json", summary)
    write_json(out / "run.json", run_record(config, extra={
        "mass_drift": check.mass_drift,
    }))
    print(f"lambda quadrature={fmt_float(check.lambda_quadrature)} "
          f"measured={fmt_float(check.lambda_measured)} "
          f"rel_err={fmt_float(check.rel_err)}")
    return 0


# ----------------------------------------------------------------------- mc

def _cmd_mc(args: argparse.Namespace) -> int:
    config = _config_for(args)
    _require_regime(config, "subcritical", "mc")
    pot, cp, sc = _periodic_frame(config, config.nu)
    settings = config.solver
    tau_hop = sc.tau()
    t_raw = settings.T / tau_hop
    nu = config.nu
    # Default step: the explicit-update stability ceiling at tau = 1.
    dt = settings.dt or 0.01 * min(1.0, nu * nu / pot.zeta)
    ensemble = simulate(pot, config.sigma, nu, 1.0, settings.particles,
                        t_raw, dt, config.seed, snapshot_times=[t_raw])

    out = Path(config.output)
    write_csv(out / "hops.csv", ["t", "particle", "from_well", "to_well"],
              ([float(h["time"]) * tau_hop, int(h["particle"]),
                int(h["from_well"]), int(h["to_well"])]
               for h in ensemble.hops))
    occupation = occupation_histogram(ensemble, cp)[0]
    write_csv(out / "occupation.csv", ["well", "fraction"],
              zip(occupation.wells, occupation.fractions))
    write_json(out / "run.json", run_record(config, seeds=[config.seed],
                                            extra={
        "tau": tau_hop, "T_raw": t_raw, "dt": dt,
        "n_hops": int(len(ensemble.hops)),
    }))
    mean_index = float(np.dot(occupation.wells, occupation.fractions))
    print(f"{len(ensemble.hops)} hops from {settings.particles} particles "
          f"over {fmt_float(settings.T)} hopping times; "
          f"mean well index {fmt_float(mean_index)}")
    return 0


# --------------------------------------------------------------- entrypoint

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML configuration document")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override one configuration key (dotted path)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--potential",
                        help="cosine | g_of_sin:a,b | table:file | "
                             "doublewell:k=v,...")
    parser.add_argument("--sigma", type=float, help="tilt")
    parser.add_argument("--nu", type=float, help="noise strength")
    parser.add_argument("--T", type=float, help="time horizon")
    parser.add_argument("--seed", type=int, help="RNG seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="washboard",
        description="Mass transport in a tilted periodic potential: "
                    "density evolution, hopping limit, and validation runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asymptotics",
                       help="scalar table of one (sigma, nu) frame")
    _add_common(p)
    p.set_defaults(handler=_cmd_asymptotics)

    p = sub.add_parser("weights", help="dump psi bumps and phi on a grid")
    _add_common(p)
    p.add_argument("--wells", type=int, help="half-width of the well window")
    p.add_argument("--cells-per-well", dest="cells_per_well", type=int)
    p.add_argument("--dump", help="CSV path (default <out>/weights.csv)")
    p.set_defaults(handler=_cmd_weights)

    p = sub.add_parser("solve", help="evolve a density and its diagnostics")
    _add_common(p)
    p.add_argument("--wells", type=int, help="half-width of the well window")
    p.add_argument("--cells-per-well", dest="cells_per_well", type=int)
    p.add_argument("--init", help="gibbs-well:j | gaussian:p0,width | "
                                  "table:file")
    p.add_argument("--cadence", type=float, help="record spacing")
    p.add_argument("--observables",
                   help="comma list restricting diagnostics columns")
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("lattice", help="integrate the hopping masses")
    _add_common(p)
    p.add_argument("--direction", choices=("left", "right", "symmetric"))
    p.add_argument("--kappa", type=float, help="uphill/downhill rate ratio")
    p.add_argument("--method", choices=("exact-poisson", "rk4"))
    p.add_argument("--init", help="point:j | table:file")
    p.add_argument("--x-var", dest="x_var", type=float,
                   help="attach a Gaussian x-profile with this variance")
    p.set_defaults(handler=_cmd_lattice)

    p = sub.add_parser("compare",
                       help="PDE vs lattice discrepancy at one noise level")
    _add_common(p)
    p.add_argument("--wells", type=int)
    p.add_argument("--cells-per-well", dest="cells_per_well", type=int)
    p.add_argument("--init", help="gibbs-well:j | gaussian:p0,width")
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("sweep",
                       help="convergence study over descending noise levels")
    _add_common(p)
    p.add_argument("--nus", help="comma list, strictly descending")
    p.add_argument("--wells", type=int)
    p.add_argument("--cells-per-well", dest="cells_per_well", type=int)
    p.add_argument("--init", help="gibbs-well:j | gaussian:p0,width")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("doublewell", help="two-well relaxation run")
    _add_common(p)
    p.add_argument("--family", choices=("symmetric-quartic", "generic"),
                   default="generic")
    p.add_argument("--params",
                   help="h_minus=..,h_plus=..,omega_minus=..,omega_plus=..,"
                        "omega0=..")
    p.add_argument("--init", help="gibbs-well:-1 | gibbs-well:1 | "
                                  "gaussian:p0,width")
    p.add_argument("--n-cells", dest="n_cells", type=int)
    p.add_argument("--cadence", type=float)
    p.set_defaults(handler=_cmd_doublewell)

    p = sub.add_parser("supercritical",
                       help="running-state drift against the quadrature slope")
    _add_common(p)
    p.add_argument("--n-cells", dest="n_cells", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--cadence", type=float)
    p.set_defaults(handler=_cmd_supercritical)

    p = sub.add_parser("mc", help="particle ensemble with hop logging")
    _add_common(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--dt", type=float, help="raw step (default: stability "
                                            "ceiling)")
    p.set_defaults(handler=_cmd_mc)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except WashboardError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
