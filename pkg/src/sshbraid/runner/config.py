"""Experiment configuration: presets, config files and flag layering."""

from __future__ import annotations

import dataclasses
import math
import re
import sys
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..model import BRANCH_NAMES, CHAIN_NAMES, ModelParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("spectrum", "braid", "transfer", "transport", "hom", "scan-adiabatic")
FORMATS = ("csv", "json")

# Default model/period/initial state per experiment. The periods are the
# ones whose dynamical phase is the quoted target phase.
PRESETS = {
    "spectrum": {"chains": "double", "period": 1332.0},
    "braid": {"chains": "double", "period": 1332.0},
    "transfer": {"chains": "double", "period": 1332.0, "initial": "A:left"},
    "transport": {"chains": "triple", "period": 2663.0, "initial": "B:left"},
    "hom": {"chains": "triple", "period": 2220.0, "initial": "B:left,B:right"},
    "scan-adiabatic": {"chains": "double", "T_grid": "10:3000:40log", "initial": "edge:I:+"},
}

# Quoted phase for each preset period, used to flag quadrature disagreement.
PRESET_PHASES = {
    ("double", 1332.0): 1.5 * math.pi,
    ("triple", 2663.0): 3.0 * math.pi,
    ("triple", 2220.0): 2.5 * math.pi,
}

_MODEL_FIELDS = tuple(f.name for f in dataclasses.fields(ModelParams) if f.name != "period")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    chains: str = "double"
    L: int = 14
    w: float = 1.0
    v0: float = 0.5
    coupling: float = 0.2
    orientation: str = "forward"
    triple_bonds: str = "cyclic"
    period: float = None
    target_phase: float = None
    steps: int = None
    grid_size: int = 401
    snapshots: int = 400
    initial: str = None
    T_grid: str = None
    symmetry: str = "spectral"
    output: str = None
    format: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        if self.symmetry not in ("spectral", "printed"):
            raise ConfigError(f"unknown symmetry method {self.symmetry!r}")
        for name in ("steps", "grid_size", "snapshots"):
            val = getattr(self, name)
            if val is not None and (isinstance(val, bool) or int(val) != val or val <= 0):
                raise ConfigError(f"{name} must be a positive integer, got {val!r}")
        if self.snapshots < 2:
            raise ConfigError("snapshots must be at least 2")
        if (
            self.steps is not None
            and self.experiment in ("transfer", "transport", "hom")
            and self.steps % (self.snapshots - 1)
        ):
            raise ConfigError(
                f"steps ({self.steps}) must be a multiple of snapshots - 1 ({self.snapshots - 1})"
            )
        if self.grid_size < 200:
            raise ConfigError("grid_size must be at least 200")
        for name in ("period", "target_phase"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive, got {val!r}")
        if self.experiment == "scan-adiabatic":
            if self.period is not None or self.target_phase is not None:
                raise ConfigError("scan-adiabatic takes its periods from T_grid; drop period/target_phase")
            parse_t_grid(self.T_grid)
            parse_edge_label(self.initial, self.model_params(1.0))
        elif (self.period is None) == (self.target_phase is None):
            raise ConfigError("exactly one of period and target_phase must be set")
        self.model_params(1.0)  # validates the model fields
        if self.experiment in ("transfer", "transport"):
            parse_site(self.initial, self.model_params(1.0))
        if self.experiment == "hom":
            parse_pair(self.initial, self.model_params(1.0))

    def model_params(self, period: float = None) -> ModelParams:
        period = self.period if period is None else period
        return ModelParams(period=period, **{k: getattr(self, k) for k in _MODEL_FIELDS})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def parse_phase(text) -> float:
    """Phase in radians; accepts a plain number or a multiple of pi (``1.5pi``)."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace("π", "pi")
    m = re.fullmatch(r"([-+0-9.e]*)\s*\*?\s*pi", s)
    try:
        if m:
            return float(m.group(1) or 1.0) * math.pi
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot parse phase {text!r}") from None


def parse_t_grid(text) -> np.ndarray:
    """``start:stop:N[log|lin]`` or a comma-separated list of periods."""
    if not text:
        raise ConfigError("T_grid is required")
    s = str(text).strip()
    m = re.fullmatch(r"([0-9.e+]+):([0-9.e+]+):(\d+)(log|lin)?", s)
    try:
        if m:
            lo, hi, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
            if not 0 < lo < hi or n < 2:
                raise ConfigError(f"bad T grid {text!r}")
            grid = np.geomspace(lo, hi, n) if m.group(4) != "lin" else np.linspace(lo, hi, n)
        else:
            grid = np.array([float(x) for x in s.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse T grid {text!r}") from None
    if np.any(grid <= 0):
        raise ConfigError("periods in T_grid must be positive")
    return grid


def parse_site(text, params: ModelParams):
    """``CHAIN:left|right`` -> (chain index, end)."""
    try:
        chain, end = str(text).split(":")
        c = CHAIN_NAMES.index(chain.strip().upper())
    except ValueError:
        raise ConfigError(f"initial site must look like 'B:left', got {text!r}") from None
    end = end.strip().lower()
    if end not in ("left", "right") or c >= params.n_chains:
        raise ConfigError(f"bad initial site {text!r} for the {params.chains.value} model")
    return c, end


def parse_edge_label(text, params: ModelParams):
    """``edge:BRANCH:+|-`` -> (branch index, parity sign)."""
    try:
        kind, branch, sign = str(text).split(":")
        b = BRANCH_NAMES.index(branch.strip().upper())
    except ValueError:
        raise ConfigError(f"initial edge state must look like 'edge:I:+', got {text!r}") from None
    if kind.strip().lower() != "edge" or sign.strip() not in ("+", "-") or b >= params.n_chains:
        raise ConfigError(f"bad initial edge state {text!r} for the {params.chains.value} model")
    return b, 1 if sign.strip() == "+" else -1


def parse_pair(text, params: ModelParams):
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ConfigError(f"initial pair must look like 'B:left,B:right', got {text!r}")
    return tuple(parse_site(p, params) for p in parts)


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from None
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {', '.join(unknown)}")
    return data


def _apply(base: dict, layer: dict, where: str) -> dict:
    layer = {k: v for k, v in layer.items() if v is not None}
    if "period" in layer and "target_phase" in layer:
        raise ConfigError(f"{where} sets both period and target_phase")
    out = dict(base)
    if "period" in layer:
        out.pop("target_phase", None)
    if "target_phase" in layer:
        out.pop("period", None)
    out.update(layer)
    return out


def build_config(experiment: str, file_values: dict = None, flags: dict = None) -> ExperimentConfig:
    """Preset, then config file, then command-line flags."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    values = dict(PRESETS[experiment])
    file_values = dict(file_values or {})
    if file_values.get("experiment", experiment) != experiment:
        raise ConfigError(
            f"config file is for {file_values['experiment']!r}, not {experiment!r}"
        )
    file_values.pop("experiment", None)
    if "target_phase" in file_values:
        file_values["target_phase"] = parse_phase(file_values["target_phase"])
    values = _apply(values, file_values, "config file")
    values = _apply(values, flags or {}, "command line")
    try:
        return ExperimentConfig(experiment=experiment, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
