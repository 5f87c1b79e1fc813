"""INI-style run configuration with embedded defaults."""
from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, DomainError
from .solver import InitialData, SolverConfig
from .special import ModelParams, TestFunctionParams

DEFAULTS = """\
[model]
n = 1
mu = 0.5
nu_sq = 0.25
p = 2.0
R = 1.0

[test_function]
# blank d: mu + 0.1 ((p+1)/(p-1) - n - mu); blank eta: eta_1
d = 1.0
eta =

[solver]
dx = 0.005
t_max = 200.0
cfl = 0.45
blowup_threshold = 1e6
outer_margin = 1.0
nonlinear = true
snapshot_every = 1.0
sample_stride = 1
support_tol = 0.01

[data]
epsilon = 0.1
amplitude_f = 1.0
amplitude_g = 1.0
power = 3

[sweep]
epsilons = 0.05, 0.1, 0.2, 0.4
refinements = 3

[verify]
# short runs behind the trace checks and the lifespan check of `verify`
epsilon = 0.4
sweep_epsilons = 0.2, 0.3, 0.4

[output]
dir = blowuplab_out
trajectory_stride = 10
"""


@dataclass
class RunConfig:
    model: ModelParams
    test_fn: TestFunctionParams
    solver: SolverConfig
    data: InitialData
    epsilons: list
    refinements: int
    verify_epsilon: float
    verify_epsilons: list
    output_dir: Path
    trajectory_stride: int
    eta_explicit: bool


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep "R" distinct
    cp.read_string(DEFAULTS)
    return cp


def _float(cp, sec, key):
    try:
        return cp.getfloat(sec, key)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: {exc}") from exc


def _int(cp, sec, key):
    try:
        return cp.getint(sec, key)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: {exc}") from exc


def _floats(cp, sec, key):
    raw = cp.get(sec, key).replace(",", " ").split()
    try:
        return [float(x) for x in raw]
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key}: {exc}") from exc


def load(path=None, *, output=None, refinements=None, need_sweep=False) -> RunConfig:
    """Read a config file over the defaults and validate it."""
    cp = _parser()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = _parser()
    for sec in cp.sections():
        if not known.has_section(sec):
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in known[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    try:
        model = ModelParams(n=_int(cp, "model", "n"), mu=_float(cp, "model", "mu"),
                            nu_sq=_float(cp, "model", "nu_sq"), p=_float(cp, "model", "p"),
                            R=_float(cp, "model", "R"))
        d_raw = cp.get("test_function", "d").strip()
        d = float(d_raw) if d_raw else model.default_d()
        eta_raw = cp.get("test_function", "eta").strip()
        eta = float(eta_raw) if eta_raw else None
        test_fn = TestFunctionParams.build(model, d, eta)
        solver = SolverConfig(
            dx=_float(cp, "solver", "dx"), t_max=_float(cp, "solver", "t_max"),
            cfl=_float(cp, "solver", "cfl"),
            blowup_threshold=_float(cp, "solver", "blowup_threshold"),
            outer_margin=_float(cp, "solver", "outer_margin"),
            nonlinear=cp.getboolean("solver", "nonlinear"),
            snapshot_every=_float(cp, "solver", "snapshot_every"),
            sample_stride=_int(cp, "solver", "sample_stride"),
            support_tol=_float(cp, "solver", "support_tol"))
        data = InitialData(epsilon=_float(cp, "data", "epsilon"), R=model.R,
                           amplitude_f=_float(cp, "data", "amplitude_f"),
                           amplitude_g=_float(cp, "data", "amplitude_g"),
                           power=_int(cp, "data", "power"))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    refs = _int(cp, "sweep", "refinements") if refinements is None else int(refinements)
    if refs < 1:
        raise ConfigError("refinements must be >= 1")
    if need_sweep and test_fn.theta <= 0:
        raise ConfigError(f"theta = {test_fn.theta:.6g} <= 0: choose d < {model.d_upper:.6g}")
    if not 1.0 < model.p < model.p_glassey:
        warnings.warn(f"p = {model.p} outside (1, p_Gla(n+mu) = {model.p_glassey:.6g}); "
                      "blow-up is not guaranteed", stacklevel=2)
    out = Path(output) if output is not None else Path(cp.get("output", "dir"))
    return RunConfig(model, test_fn, solver, data, _floats(cp, "sweep", "epsilons"), refs,
                     _float(cp, "verify", "epsilon"), _floats(cp, "verify", "sweep_epsilons"),
                     out, _int(cp, "output", "trajectory_stride"), eta is not None)


def dump(cfg: RunConfig) -> str:
    """Resolved configuration as INI text (derived values filled in)."""
    cp = _parser()
    m, s, dt = cfg.model, cfg.solver, cfg.data
    cp["model"].update(n=str(m.n), mu=repr(m.mu), nu_sq=repr(m.nu_sq), p=repr(m.p), R=repr(m.R))
    cp["test_function"].update(d=repr(cfg.test_fn.d), eta=repr(cfg.test_fn.eta))
    for key in ("dx", "t_max", "cfl", "blowup_threshold", "outer_margin", "snapshot_every",
                "support_tol"):
        cp["solver"][key] = repr(getattr(s, key))
    cp["solver"]["nonlinear"] = str(s.nonlinear).lower()
    cp["solver"]["sample_stride"] = str(s.sample_stride)
    cp["data"].update(epsilon=repr(dt.epsilon), amplitude_f=repr(dt.amplitude_f),
                      amplitude_g=repr(dt.amplitude_g), power=str(dt.power))
    cp["sweep"].update(epsilons=", ".join(map(repr, cfg.epsilons)), refinements=str(cfg.refinements))
    cp["verify"].update(epsilon=repr(cfg.verify_epsilon),
                        sweep_epsilons=", ".join(map(repr, cfg.verify_epsilons)))
    cp["output"].update(dir=str(cfg.output_dir), trajectory_stride=str(cfg.trajectory_stride))
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def finite(x: float) -> bool:
    return x is not None and math.isfinite(x)
