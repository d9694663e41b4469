"""Declarative run configuration, schema validation, and artifact emission.

A run is described by a single nested key/value document (YAML): a
potential block, the dynamical regime, tilt and noise parameters, a solver
settings section, an initial-data spec, an output directory, and a seed.
Command-line flags override individual keys through dotted assignments.

Emission helpers serialize every float with 17 significant digits and
write no timestamps, so re-running an identical configuration reproduces
the artifact files byte for byte.  ``run_record`` captures the library
versions, the configuration echo, its hash, and the seeds required to
replay a run from the run.json alone.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from . import __version__
from .doublewell import DoubleWellPotential, make_double_well
from .errors import ConfigError
from .potential import (
    PeriodicPotential,
    cosine,
    from_table,
    g_of_sin_quadratic,
)

REGIMES = ("subcritical", "supercritical", "doublewell")

FLOAT_FMT = ".17g"


# ------------------------------------------------------------- serialization

def fmt_float(x: float) -> str:
    """Shortest text holding all 17 significant digits of a double."""
    return format(float(x), FLOAT_FMT)


def dumps_17g(obj: Any, indent: int = 2) -> str:
    """JSON text with floats rendered at 17 significant digits.

    The stdlib encoder pins floats to repr, so the small recursion here
    only re-implements the value walk; strings reuse json escaping.
    """

    def render(node: Any, depth: int) -> str:
        pad = " " * (indent * (depth + 1))
        close = " " * (indent * depth)
        if isinstance(node, Mapping):
            if not node:
                return "{}"
            items = (f'{pad}{json.dumps(str(k))}: {render(v, depth + 1)}'
                     for k, v in node.items())
            return "{\n" + ",\n".join(items) + "\n" + close + "}"
        if isinstance(node, (list, tuple)):
            if not len(node):
                return "[]"
            items = (f"{pad}{render(v, depth + 1)}" for v in node)
            return "[\n" + ",\n".join(items) + "\n" + close + "]"
        if isinstance(node, bool) or node is None:
            return json.dumps(node)
        if isinstance(node, (int, np.integer)):
            return str(int(node))
        if isinstance(node, (float, np.floating)):
            if not np.isfinite(node):
                raise ConfigError(f"cannot serialize non-finite value {node!r}")
            return fmt_float(float(node))
        if isinstance(node, str):
            return json.dumps(node)
        if isinstance(node, np.ndarray):
            return render(node.tolist(), depth)
        raise ConfigError(f"cannot serialize {type(node).__name__} to JSON")

    return render(obj, 0) + "\n"


def write_json(path: Union[str, Path], obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_17g(obj))
    return path


def write_csv(path: Union[str, Path], header: Sequence[str],
              rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with 17-digit floats; an empty row iterable leaves header only."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([
                fmt_float(v) if isinstance(v, (float, np.floating)) else v
                for v in row
            ])
    return path


def read_columns(path: Union[str, Path], n_cols: int) -> Tuple[np.ndarray, ...]:
    """Numeric columns from a CSV table, tolerating one header row."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"table file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(cell) for cell in row[:n_cols]]
            except ValueError:
                if lineno == 0:
                    continue
                raise ConfigError(f"non-numeric row {lineno + 1} in {path}")
            if len(vals) < n_cols:
                raise ConfigError(f"row {lineno + 1} in {path} has fewer than "
                                  f"{n_cols} columns")
            rows.append(vals)
    if not rows:
        raise ConfigError(f"no numeric rows in {path}")
    data = np.asarray(rows, dtype=float)
    return tuple(data[:, k] for k in range(n_cols))


# ----------------------------------------------------------------- potential

_POTENTIAL_KEYS = {
    "cosine": set(),
    "g_of_sin": {"a", "b"},
    "table": {"file"},
    "doublewell": {"h_minus", "h_plus", "omega_minus", "omega_plus", "omega0"},
}


def build_potential(block: Mapping[str, Any]
                    ) -> Union[PeriodicPotential, DoubleWellPotential]:
    """Instantiate the potential named by a configuration block."""
    if not isinstance(block, Mapping):
        raise ConfigError("potential block must be a mapping with a 'kind'")
    kind = block.get("kind")
    if kind not in _POTENTIAL_KEYS:
        raise ConfigError(f"unknown potential kind {kind!r}; expected one of "
                          f"{sorted(_POTENTIAL_KEYS)}")
    extra = set(block) - _POTENTIAL_KEYS[kind] - {"kind"}
    if extra:
        raise ConfigError(f"unknown potential keys {sorted(extra)} for "
                          f"kind {kind!r}")
    if kind == "cosine":
        return cosine()
    if kind == "g_of_sin":
        missing = {"a", "b"} - set(block)
        if missing:
            raise ConfigError(f"g_of_sin potential needs keys {sorted(missing)}")
        return g_of_sin_quadratic(float(block["a"]), float(block["b"]))
    if kind == "table":
        if "file" not in block:
            raise ConfigError("table potential needs a 'file' key")
        p, h = read_columns(block["file"], 2)
        return from_table(p, h)
    kwargs = {k: float(v) for k, v in block.items() if k != "kind"}
    return make_double_well(**kwargs)


# -------------------------------------------------------------- initial data

@dataclass(frozen=True)
class InitSpec:
    """Parsed initial-data selector.

    kind 'gibbs-well' carries the well index, 'gaussian' the center and
    width, 'table' the path of a sampled density, 'point' a lattice site.
    """

    kind: str
    well: int = 0
    p0: float = 0.0
    width: float = 0.0
    file: str = ""

    def label(self) -> str:
        if self.kind == "gibbs-well":
            return f"gibbs-well:{self.well}"
        if self.kind == "gaussian":
            return f"gaussian:{fmt_float(self.p0)},{fmt_float(self.width)}"
        if self.kind == "table":
            return f"table:{self.file}"
        return f"point:{self.well}"


def parse_init(spec: str) -> InitSpec:
    """Parse 'gibbs-well:j' | 'gaussian:p0,width' | 'table:file' | 'point:j'."""
    if not isinstance(spec, str) or ":" not in spec:
        raise ConfigError(f"malformed initial-data spec {spec!r}")
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    arg = arg.strip()
    try:
        if kind in ("gibbs-well", "point"):
            return InitSpec(kind=kind, well=int(arg))
        if kind == "gaussian":
            p0_text, _, width_text = arg.partition(",")
            p0, width = float(p0_text), float(width_text)
            if width <= 0.0:
                raise ConfigError("gaussian initial data needs width > 0")
            return InitSpec(kind=kind, p0=p0, width=width)
    except ValueError:
        raise ConfigError(f"malformed initial-data spec {spec!r}")
    if kind == "table":
        if not arg:
            raise ConfigError("table initial data needs a file path")
        return InitSpec(kind=kind, file=arg)
    raise ConfigError(f"unknown initial-data kind {kind!r}")


# ------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SolverSettings:
    """Discretization and run-length knobs shared by the subcommands."""

    wells: int = 4
    cells_per_well: int = 48
    n_cells: int = 768
    T: float = 1.0
    l1_tol: float = 1e-6
    cadence: Optional[float] = None
    theta: float = 1.0
    particles: int = 10_000
    dt: Optional[float] = None
    method: str = "exact-poisson"
    direction: Optional[str] = None
    kappa: Optional[float] = None
    time_scale: str = "kramers"

    def __post_init__(self):
        if self.wells < 1:
            raise ConfigError("solver.wells must be at least 1")
        if self.cells_per_well < 16:
            raise ConfigError("solver.cells_per_well must be at least 16")
        if self.n_cells < 32:
            raise ConfigError("solver.n_cells must be at least 32")
        if not self.T >= 0.0:
            raise ConfigError("solver.T must be nonnegative")
        if not self.l1_tol > 0.0:
            raise ConfigError("solver.l1_tol must be positive")
        if self.cadence is not None and not self.cadence > 0.0:
            raise ConfigError("solver.cadence must be positive when given")
        if self.particles < 1:
            raise ConfigError("solver.particles must be at least 1")
        if self.dt is not None and not self.dt > 0.0:
            raise ConfigError("solver.dt must be positive when given")
        if self.method not in ("exact-poisson", "rk4"):
            raise ConfigError(f"unknown lattice method {self.method!r}")
        if self.direction not in (None, "left", "right", "symmetric"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        if self.kappa is not None and self.kappa < 0.0:
            raise ConfigError("solver.kappa must be nonnegative")
        if self.time_scale not in ("kramers", "refined"):
            raise ConfigError(f"unknown time scale {self.time_scale!r}")


@dataclass(frozen=True)
class RunConfig:
    """Validated description of one experiment run (or a nu sweep)."""

    potential: Mapping[str, Any] = field(
        default_factory=lambda: {"kind": "cosine"})
    regime: str = "subcritical"
    sigma: float = 0.0
    nus: Tuple[float, ...] = (0.5,)
    solver: SolverSettings = field(default_factory=SolverSettings)
    init: str = "gibbs-well:0"
    output: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one "
                              f"of {REGIMES}")
        if not self.nus:
            raise ConfigError("at least one nu value is required")
        if any(not nu > 0.0 for nu in self.nus):
            raise ConfigError("every nu must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        parse_init(self.init)
        pot = build_potential(self.potential)
        if self.regime == "doublewell":
            if not isinstance(pot, DoubleWellPotential):
                raise ConfigError("doublewell regime needs a doublewell "
                                  "potential block")
            if self.sigma != 0.0:
                raise ConfigError("doublewell regime runs at sigma = 0")
            return
        if isinstance(pot, DoubleWellPotential):
            raise ConfigError(f"{self.regime} regime needs a periodic "
                              "potential block")
        inside = pot.sigma_min < self.sigma < pot.sigma_max
        if self.regime == "subcritical" and not inside:
            raise ConfigError(
                f"subcritical regime needs sigma in ({fmt_float(pot.sigma_min)}"
                f", {fmt_float(pot.sigma_max)}); got {fmt_float(self.sigma)}")
        if self.regime == "supercritical" and inside:
            raise ConfigError(
                f"supercritical regime needs sigma outside "
                f"[{fmt_float(pot.sigma_min)}, {fmt_float(pot.sigma_max)}]; "
                f"got {fmt_float(self.sigma)}")

    @property
    def nu(self) -> float:
        if len(self.nus) != 1:
            raise ConfigError("this command takes a single nu, not a sweep "
                              "list; pick one or use the sweep command")
        return self.nus[0]

    def make_potential(self) -> Union[PeriodicPotential, DoubleWellPotential]:
        return build_potential(self.potential)

    def init_spec(self) -> InitSpec:
        return parse_init(self.init)

    def as_mapping(self) -> dict:
        """Fully-populated echo of the configuration (defaults included)."""
        data = asdict(self)
        data["potential"] = dict(self.potential)
        data["nus"] = list(self.nus)
        data["solver"] = asdict(self.solver)
        return data

    def replace(self, **kwargs) -> "RunConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kwargs)
        return RunConfig(**data)


_TOP_KEYS = {"potential", "regime", "sigma", "nu", "nus", "solver", "init",
             "output", "seed"}


def _coerce_nus(data: Mapping[str, Any]) -> Tuple[float, ...]:
    if "nu" in data and "nus" in data:
        raise ConfigError("give either 'nu' or 'nus', not both")
    raw = data.get("nus", data.get("nu", 0.5))
    if isinstance(raw, (int, float)):
        return (float(raw),)
    if isinstance(raw, (list, tuple)):
        if not raw or not all(isinstance(v, (int, float)) for v in raw):
            raise ConfigError("'nus' must be a nonempty list of numbers")
        return tuple(float(v) for v in raw)
    raise ConfigError(f"'nu' must be a number or a list, got {type(raw).__name__}")


def from_mapping(data: Mapping[str, Any]) -> RunConfig:
    """Validate a parsed configuration document into a RunConfig."""
    if not isinstance(data, Mapping):
        raise ConfigError("configuration document must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    solver_block = data.get("solver", {})
    if not isinstance(solver_block, Mapping):
        raise ConfigError("'solver' must be a mapping of settings")
    allowed = {f.name for f in fields(SolverSettings)}
    bad = set(solver_block) - allowed
    if bad:
        raise ConfigError(f"unknown solver keys {sorted(bad)}")
    try:
        solver = SolverSettings(**{k: v for k, v in solver_block.items()})
    except TypeError as exc:
        raise ConfigError(f"bad solver settings: {exc}")
    kwargs: dict = {
        "regime": data.get("regime", "subcritical"),
        "sigma": float(data.get("sigma", 0.0)),
        "nus": _coerce_nus(data),
        "solver": solver,
        "init": data.get("init", "gibbs-well:0"),
        "output": str(data.get("output", "runs")),
        "seed": int(data.get("seed", 0)),
    }
    if "potential" in data:
        kwargs["potential"] = dict(data["potential"])
    return RunConfig(**kwargs)


def apply_overrides(data: dict, assignments: Sequence[str]) -> dict:
    """Apply 'dotted.key=value' overrides; values parse as YAML scalars."""
    out = json.loads(json.dumps(data)) if data else {}
    for text in assignments:
        key, sep, value = text.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {text!r} is not of the form key=value")
        try:
            parsed = yaml.safe_load(value)
        except yaml.YAMLError:
            raise ConfigError(f"cannot parse override value {value!r}")
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = parsed
    return out


def load_document(path: Union[str, Path]) -> dict:
    """Parse a YAML configuration document into a plain mapping."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        loaded = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path} must hold a mapping at top level")
    return loaded


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Sequence[str] = ()) -> RunConfig:
    """Read a YAML document (optional) and apply overrides, then validate."""
    data = load_document(path) if path is not None else {}
    data = apply_overrides(data, overrides)
    return from_mapping(data)


# ------------------------------------------------------------------- records

def config_hash(config: RunConfig) -> str:
    """sha256 of the canonical one-line JSON echo of the configuration."""
    canonical = dumps_17g(_sorted_deep(config.as_mapping()), indent=0)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _sorted_deep(node: Any) -> Any:
    if isinstance(node, Mapping):
        return {k: _sorted_deep(node[k]) for k in sorted(node)}
    if isinstance(node, (list, tuple)):
        return [_sorted_deep(v) for v in node]
    return node


def run_record(config: RunConfig, seeds: Sequence[int] = (),
               extra: Optional[Mapping[str, Any]] = None) -> dict:
    """Replay record: versions, configuration echo and hash, seeds."""
    import numpy
    import scipy
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:  # pragma: no cover - numba is an optional speedup
        numba_version = None
    record = {
        "washboard": __version__,
        "versions": {
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "numba": numba_version,
        },
        "config": config.as_mapping(),
        "config_sha256": config_hash(config),
        "seeds": [int(s) for s in seeds],
    }
    if extra:
        record.update({str(k): v for k, v in extra.items()})
    return record
