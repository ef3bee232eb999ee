"""Run configuration: a sectioned INI file with all angles in units of pi.

Example::

    [run]
    command = evolve
    seed = 0

    [model]
    hT_over_pi = 0.9
    JT_over_pi = 0.16
    MT_over_pi = 0.98
    N0 = 4

    [schedule]
    dt = 0.01
    n_periods = 20

Grid values accept either a comma list (``0, 0.1, 0.2``) or
``start:stop:num`` for an inclusive linear grid.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .model import DisorderSpec, ModelParams, params_from_pi
from .recompile import OptimizerConfig

COMMANDS = ("evolve", "phase-diagram", "floquet", "recompile", "noisy")


class ConfigError(ValueError):
    """Invalid configuration value; the message starts with the field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class ModelSection:
    hT_over_pi: float = 0.9
    JT_over_pi: float = 0.16
    MT_over_pi: float = 0.98
    T: float = 1.0
    N0: int = 4


@dataclass
class ScheduleSection:
    dt: float = 0.01
    n_periods: int = 20


@dataclass
class DisorderSection:
    dh: float = 0.0
    dJ: float = 0.0
    dM: float = 0.0
    n_realizations: int = 1


@dataclass
class SweepSection:
    JT_over_pi: str = "0:0.3:16"
    hT_over_pi: str = "0.5:1.5:16"


@dataclass
class FloquetSection:
    N_list: str = "4,6,8"
    quadruplet_tol_over_pi: float = 0.01  # 0.02 * (pi/2)
    delta_over_pi: float = 0.05
    scaling_periods: int = 400
    method: str = "trotter"


@dataclass
class RecompileSection:
    n_layers: int = 3
    k_max: int = 20
    max_iterations: int = 200
    n_hops: int = 10
    hop_scale: float = 0.3
    fd_step: float = 1e-6
    metric: str = "real"
    table: str = ""


@dataclass
class NoiseSection:
    r1: float = 1e-3
    r2: str = ""  # empty: 10 * r1
    r_list: str = "1e-4,1e-3,1e-2"
    n_shots: int = 4000
    circuit_dt: float = 0.1
    calibration: str = ""
    mitigate: bool = False


SECTIONS = {
    "model": ModelSection, "schedule": ScheduleSection, "disorder": DisorderSection,
    "sweep": SweepSection, "floquet": FloquetSection, "recompile": RecompileSection,
    "noise": NoiseSection,
}


@dataclass
class RunConfig:
    command: str = "evolve"
    seed: int = 0
    out: str = ""
    workers: int = 0  # 0: take DTC4T_WORKERS or 1
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    disorder: DisorderSection = field(default_factory=DisorderSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    floquet: FloquetSection = field(default_factory=FloquetSection)
    recompile: RecompileSection = field(default_factory=RecompileSection)
    noise: NoiseSection = field(default_factory=NoiseSection)

    # -- derived objects -------------------------------------------------

    def params(self) -> ModelParams:
        m = self.model
        return params_from_pi(m.hT_over_pi, m.JT_over_pi, m.MT_over_pi, m.T, m.N0)

    def disorder_spec(self) -> DisorderSpec:
        d = self.disorder
        return DisorderSpec(d.dh, d.dJ, d.dM, d.n_realizations, self.seed)

    def optimizer(self) -> OptimizerConfig:
        r = self.recompile
        return OptimizerConfig(max_iterations=r.max_iterations, n_hops=r.n_hops, hop_scale=r.hop_scale,
                               fd_step=r.fd_step, metric=r.metric, seed=self.seed)

    def grid(self, name: str) -> np.ndarray:
        return parse_grid(getattr(self.sweep, name), f"sweep.{name}")

    def n_list(self) -> list[int]:
        return [int(v) for v in parse_grid(self.floquet.N_list, "floquet.N_list")]

    def r_list(self) -> list[float]:
        return [float(v) for v in parse_grid(self.noise.r_list, "noise.r_list")]

    def r2(self) -> float | None:
        return float(self.noise.r2) if self.noise.r2.strip() else None

    # -- serialization ---------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["run"] = {"command": self.command, "seed": str(self.seed)}
        for name in SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_grid(text: str, path: str) -> np.ndarray:
    text = str(text).strip()
    if not text:
        raise ConfigError(path, "empty grid")
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            num = int(num)
            if num < 1:
                raise ConfigError(path, "grid needs at least one point")
            vals = np.linspace(float(start), float(stop), num)
        else:
            vals = np.array([float(t) for t in text.split(",") if t.strip()])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, f"cannot parse grid {text!r} ({exc})") from None
    if vals.size == 0:
        raise ConfigError(path, "empty grid")
    if not np.all(np.isfinite(vals)):
        raise ConfigError(path, "grid values must be finite")
    return vals


def _coerce(raw: str, typ, path: str):
    try:
        if typ is bool or typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int or typ == "int":
            f = float(raw)
            if f != int(f):
                raise ValueError(f"not an integer: {raw!r}")
            return int(f)
        if typ is float or typ == "float":
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None
    cfg = RunConfig()
    for sec in cp.sections():
        if sec != "run" and sec not in SECTIONS:
            raise ConfigError(sec, "unknown section")
    if cp.has_section("run"):
        for key, raw in cp["run"].items():
            if key == "command":
                cfg.command = raw.strip()
            elif key == "seed":
                cfg.seed = _coerce(raw, int, "run.seed")
            elif key == "out":
                cfg.out = raw.strip()
            elif key == "workers":
                cfg.workers = _coerce(raw, int, "run.workers")
            else:
                raise ConfigError(f"run.{key}", "unknown key")
    for name, cls in SECTIONS.items():
        if not cp.has_section(name):
            continue
        sec = getattr(cfg, name)
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in cp[name].items():
            if key not in types:
                raise ConfigError(f"{name}.{key}", "unknown key")
            setattr(sec, key, _coerce(raw, types[key], f"{name}.{key}"))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError("run.command", f"must be one of {', '.join(COMMANDS)}, got {cfg.command!r}")
    m = cfg.model
    for key in ("hT_over_pi", "JT_over_pi", "MT_over_pi", "T"):
        if not math.isfinite(getattr(m, key)):
            raise ConfigError(f"model.{key}", "must be finite")
    if not m.T > 0:
        raise ConfigError("model.T", "must be positive")
    if m.N0 < 2:
        raise ConfigError("model.N0", "must be an integer >= 2")
    if not cfg.schedule.dt > 0:
        raise ConfigError("schedule.dt", "must be positive")
    if cfg.schedule.n_periods < 1:
        raise ConfigError("schedule.n_periods", "must be >= 1")
    d = cfg.disorder
    for key in ("dh", "dJ", "dM"):
        if not 0 <= getattr(d, key) < 1:
            raise ConfigError(f"disorder.{key}", "must lie in [0, 1)")
    if d.n_realizations < 1:
        raise ConfigError("disorder.n_realizations", "must be >= 1")
    if cfg.command == "phase-diagram":
        cfg.grid("JT_over_pi")
        cfg.grid("hT_over_pi")
    if cfg.command == "floquet":
        for n in cfg.n_list():
            if n < 4 or n % 2:
                raise ConfigError("floquet.N_list", f"sizes must be even and >= 4, got {n}")
        if cfg.floquet.method not in ("trotter", "reference"):
            raise ConfigError("floquet.method", "must be 'trotter' or 'reference'")
    r = cfg.recompile
    if r.k_max < 1:
        raise ConfigError("recompile.k_max", "must be >= 1")
    if r.n_layers < 0:
        raise ConfigError("recompile.n_layers", "must be >= 0")
    if r.metric not in ("real", "fidelity"):
        raise ConfigError("recompile.metric", "must be 'real' or 'fidelity'")
    nz = cfg.noise
    if not 0 <= nz.r1 < 1:
        raise ConfigError("noise.r1", "must lie in [0, 1)")
    if nz.r2.strip():
        try:
            r2 = float(nz.r2)
        except ValueError:
            raise ConfigError("noise.r2", f"not a number: {nz.r2!r}") from None
        if not 0 <= r2 < 1:
            raise ConfigError("noise.r2", "must lie in [0, 1)")
    if cfg.command == "noisy":
        for v in cfg.r_list():
            if not 0 <= v < 1:
                raise ConfigError("noise.r_list", "rates must lie in [0, 1)")
    if nz.n_shots < 2:
        raise ConfigError("noise.n_shots", "must be >= 2")
    if not nz.circuit_dt > 0:
        raise ConfigError("noise.circuit_dt", "must be positive")
