"""
Experiment configuration: TOML files, named presets and CLI overrides.

A config file has exactly five tables:

    [grid]         n_h, n_v, L_h, L_v
    [solver]       dt, t_end, cfl_safety, linear_only
    [data]         preset, eta, seed
    [diagnostics]  head_dt, head_end, per_octave, extra_times, fit_window,
                   plateau_window, residual_times, refine_check, terms,
                   term_norms, expansions, remainder_norms
    [output]       directory, progress, save_snapshots

Unknown tables or keys are errors.
"""
import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from aniso_decay.errors import ConfigError, GridError, ScheduleError
from aniso_decay.grid_spectral import Grid, make_grid
from aniso_decay.presets import PRESET_NAMES
from aniso_decay.snapshots import Schedule, make_schedule
from aniso_decay.solver import SolverConfig

logger = logging.getLogger(__name__)

CONFIG_PRESETS = ("thm1-decay", "corollary", "linear-decay", "smoke")


@dataclass(frozen=True)
class GridParams:
    n_h: int = 64
    n_v: int = 32
    L_h: float = 96.0
    L_v: float = 12.0

    def build(self) -> Grid:
        return make_grid(self.n_h, self.n_v, self.L_h, self.L_v)


@dataclass(frozen=True)
class SolverParams:
    dt: float = 0.01
    t_end: float = 50.0
    cfl_safety: float = 0.5
    linear_only: bool = False


@dataclass(frozen=True)
class DataParams:
    preset: str = "corollary-phi"
    eta: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class DiagnosticsParams:
    head_dt: float = 0.02
    head_end: float = 1.0
    per_octave: int = 4
    extra_times: tuple[float, ...] = (5.0, 10.0, 50.0)
    fit_window: tuple[float, float] = (5.0, 50.0)
    plateau_window: tuple[float, float] = (10.0, 50.0)
    residual_times: tuple[float, ...] = (1.0, 4.0, 16.0)
    refine_check: bool = True
    terms: tuple[str, ...] = ("Dh1", "Dh2", "Dh3", "Dh4", "Dh5", "Dv1", "Dv2", "Dv3")
    term_norms: tuple[float, ...] = (2.0,)
    expansions: tuple[str, ...] = ("uh-leading", "u3-leading", "u3-second-order", "uh-linear",
                                   "u3-linear", "u3-linear-first-moment")
    remainder_norms: tuple[float, ...] = (2.0, float("inf"))


@dataclass(frozen=True)
class OutputParams:
    directory: str = "runs/default"
    progress: bool = True
    save_snapshots: bool = True


_SECTIONS = {
    "grid": GridParams,
    "solver": SolverParams,
    "data": DataParams,
    "diagnostics": DiagnosticsParams,
    "output": OutputParams,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    grid: GridParams = field(default_factory=GridParams)
    solver: SolverParams = field(default_factory=SolverParams)
    data: DataParams = field(default_factory=DataParams)
    diagnostics: DiagnosticsParams = field(default_factory=DiagnosticsParams)
    output: OutputParams = field(default_factory=OutputParams)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.data.preset not in PRESET_NAMES:
            raise ConfigError(f"unknown data preset '{self.data.preset}', expected one of {PRESET_NAMES}")
        if not self.data.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.data.eta}")
        try:
            grid = self.grid.build()
            self.solver_config()
            self.schedule()
        except (ValueError, GridError, ScheduleError) as e:
            raise ConfigError(str(e)) from e
        window = grid.validity_time
        if self.solver.t_end > window * (1 + 1e-12):
            raise ConfigError(
                f"t_end={self.solver.t_end} exceeds the validity window t <= (L_h/12)^2 = {window:g} "
                f"for L_h={self.grid.L_h}")
        lo, hi = self.diagnostics.fit_window
        if not 0 < lo < hi <= self.solver.t_end:
            raise ConfigError(f"fit_window {self.diagnostics.fit_window} must lie inside (0, t_end]")

    def solver_config(self, progress: bool | None = None) -> SolverConfig:
        return SolverConfig(
            dt=self.solver.dt,
            t_end=self.solver.t_end,
            cfl_safety=self.solver.cfl_safety,
            linear_only=self.solver.linear_only,
            progress=self.output.progress if progress is None else progress,
        )

    def schedule(self) -> Schedule:
        d = self.diagnostics
        extra = tuple(t for t in (*d.extra_times, *d.residual_times, *d.fit_window, *d.plateau_window)
                      if t <= self.solver.t_end)
        return make_schedule(d.head_dt, d.head_end, d.per_octave, self.solver.t_end, extra)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """
        Return a copy with dotted overrides applied, e.g.
        with_overrides(**{"data.eta": 0.02, "solver.linear_only": True}).
        """
        sections = {name: getattr(self, name) for name in _SECTIONS}
        top = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if "." not in key:
                top[key] = value
                continue
            section, name = key.split(".", 1)
            if section not in sections:
                raise ConfigError(f"unknown config section '{section}'")
            sections[section] = _replace_checked(section, sections[section], {name: value})
        return replace(self, **top, **sections)

    def to_toml(self) -> str:
        lines = [f'name = "{self.name}"']
        for section in _SECTIONS:
            lines.append("")
            lines.append(f"[{section}]")
            for key, value in asdict(getattr(self, section)).items():
                lines.append(f"{key} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, float):
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return str(value)


def _coerce(section: str, params_type, values: dict) -> dict:
    known = {f.name: f for f in fields(params_type)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    out = {}
    defaults = params_type()
    for key, value in values.items():
        default = getattr(defaults, key)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"[{section}] {key} must be a list, got {value!r}")
            value = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"[{section}] {key} must be true or false, got {value!r}")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
                raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
            value = int(value)
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
            value = float(value)
        out[key] = value
    return out


def _replace_checked(section: str, params, values: dict):
    return replace(params, **_coerce(section, type(params), values))


def config_from_dict(raw: dict, name: str | None = None) -> ExperimentConfig:
    """Build a config from parsed TOML; missing keys take their defaults."""
    unknown = set(raw) - set(_SECTIONS) - {"name"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for section, params_type in _SECTIONS.items():
        values = raw.get(section, {})
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        sections[section] = params_type(**_coerce(section, params_type, values))
    return ExperimentConfig(name=name or raw.get("name", "custom"), **sections)


def load_config(path: str | Path) -> ExperimentConfig:
    """
    Parse a TOML experiment config.

    Args:
        path: the .toml file.

    Returns: the validated ExperimentConfig.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path} not found") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    return config_from_dict(raw, raw.get("name", path.stem))


def preset_config(name: str) -> ExperimentConfig:
    """
    Complete configs for the named experiments.

    thm1-decay and corollary share the small-data run with eta = 0.01 times
    the corollary data; linear-decay switches the nonlinearity off; smoke is
    a seconds-long run on a tiny grid.
    """
    base = ExperimentConfig(name=name, output=OutputParams(directory=f"runs/{name}"))
    if name == "thm1-decay":
        return base
    if name == "corollary":
        return base.with_overrides(**{
            "diagnostics.terms": (),
            "diagnostics.refine_check": False,
            "diagnostics.expansions": ("u3-leading",),
            "diagnostics.remainder_norms": (float("inf"),),
        })
    if name == "linear-decay":
        return base.with_overrides(**{
            "solver.linear_only": True,
            "diagnostics.terms": (),
            "diagnostics.refine_check": False,
            "diagnostics.expansions": ("uh-linear", "u3-linear", "u3-linear-first-moment"),
            "diagnostics.remainder_norms": (2.0,),
        })
    if name == "smoke":
        return ExperimentConfig(
            name=name,
            grid=GridParams(16, 16, 24.0, 8.0),
            solver=SolverParams(dt=0.05, t_end=4.0),
            diagnostics=DiagnosticsParams(
                head_dt=0.05, head_end=0.5, per_octave=4, extra_times=(0.4, 4.0),
                fit_window=(0.4, 4.0), plateau_window=(1.0, 4.0), residual_times=(0.5, 1.0),
                refine_check=False, terms=("Dh1", "Dv1"), expansions=("uh-leading", "u3-linear")),
            output=OutputParams(directory="runs/smoke", progress=False),
        )
    raise ConfigError(f"unknown experiment preset '{name}', expected one of {CONFIG_PRESETS}")
