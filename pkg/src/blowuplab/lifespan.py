"""Lifespan sweeps over the data size epsilon.

Every epsilon is run at dx, dx/2, dx/4 (by default), the detection times are
extrapolated, and log T_est is fitted against log epsilon. The fitted slope
is compared with the exponent of the upper bound ``T <= C eps^{-(p-1)/theta}``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_writer
from .errors import ConfigError
from .solver import SolverConfig, blowup_time_extrapolate, make_initial_data, run
from .special import ModelParams, TestFunctionParams, lifespan_exponent

SWEEP_COLUMNS = ("epsilon", "T_dx", "T_dx2", "T_dx4", "T_est", "uncertainty", "censored")
DEFAULT_EPSILONS = (0.05, 0.1, 0.2, 0.4)


@dataclass
class SweepEntry:
    epsilon: float
    times: tuple  # detection time per refinement level, NaN when the run completed
    T_est: float
    uncertainty: float
    censored: bool


@dataclass
class SweepResult:
    entries: list
    slope_fit: float
    intercept: float
    slope_theory: float
    residual: float
    regime: str
    theta: float
    p: float
    fit_available: bool = True
    notes: list = field(default_factory=list)

    @property
    def uncensored(self) -> list:
        return [e for e in self.entries if not e.censored]

    @property
    def censored(self) -> list:
        return [e for e in self.entries if e.censored]

    def bound_constants(self) -> np.ndarray:
        """Per-entry ``eps^{-(p-1)} / ((1+T)^theta - 2^theta)`` for uncensored entries."""
        out = []
        for e in self.uncensored:
            gap = (1.0 + e.T_est) ** self.theta - 2.0 ** self.theta
            out.append(e.epsilon ** (1.0 - self.p) / gap if gap > 0 else math.inf)
        return np.array(out)

    @property
    def C_emp(self) -> float:
        c = self.bound_constants()
        return float(c.min()) if c.size else math.nan


def regime_tag(model: ModelParams) -> str:
    if model.delta < 0:
        return "delta<0"
    return "delta=0" if model.delta == 0 else "delta>0"


def max_workers() -> int:
    """Worker cap from ``BLOWUPLAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get("BLOWUPLAB_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ConfigError(f"BLOWUPLAB_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise ConfigError("BLOWUPLAB_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _detect(args) -> float:
    model, config, epsilon, profile = args
    traj = run(make_initial_data(model, epsilon, **profile), model, config)
    return traj.outcome.t_detect if traj.outcome.blew_up else math.nan


def run_tasks(fn, tasks: list, workers: int | None = None) -> list:
    """Map ``fn`` over ``tasks`` preserving order; processes when ``workers > 1``."""
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def extrapolate(times: tuple) -> tuple[float, float]:
    """Combine detection times from successive refinements into ``(T_est, uncertainty)``."""
    if len(times) >= 3:
        return blowup_time_extrapolate(times[-3:])
    if len(times) == 2:
        t1, t2 = times
        return 2.0 * t2 - t1, abs(t1 - t2)
    return float(times[0]), 0.0


def fit_loglog(eps: np.ndarray, T: np.ndarray) -> tuple[float, float, float]:
    """Least-squares ``log T = slope log eps + intercept``; returns (slope, intercept, rms)."""
    x, y = np.log(eps), np.log(T)
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), rms


def sweep(model: ModelParams, params: TestFunctionParams, config: SolverConfig,
          epsilons=DEFAULT_EPSILONS, refinements: int = 3, profile: dict | None = None,
          workers: int | None = None) -> SweepResult:
    """Blow-up times across ``epsilons`` with grid-refinement extrapolation."""
    epsilons = sorted(float(e) for e in epsilons)
    if not epsilons or any(e <= 0 for e in epsilons):
        raise ConfigError("sweep needs positive epsilons")
    if params.theta <= 0:
        raise ConfigError(f"theta must be > 0 for a lifespan sweep, got {params.theta:.6g}")
    if refinements < 1:
        raise ConfigError("refinements must be >= 1")
    profile = profile or {}
    tasks = [(model, config.refined(k), e, profile) for e in epsilons for k in range(refinements)]
    detected = run_tasks(_detect, tasks, workers)
    entries = []
    for i, e in enumerate(epsilons):
        times = tuple(detected[i * refinements:(i + 1) * refinements])
        if any(math.isnan(t) for t in times):
            entries.append(SweepEntry(e, times, config.t_max, math.nan, True))
        else:
            T_est, unc = extrapolate(times)
            entries.append(SweepEntry(e, times, T_est, unc, False))
    slope_theory = -lifespan_exponent(model, params.d)
    result = SweepResult(entries, math.nan, math.nan, slope_theory, math.nan, regime_tag(model),
                         params.theta, model.p, fit_available=False)
    live = result.uncensored
    if len(live) >= 3:
        result.slope_fit, result.intercept, result.residual = fit_loglog(
            np.array([e.epsilon for e in live]), np.array([e.T_est for e in live]))
        result.fit_available = True
    else:
        result.notes.append(f"fit unavailable: {len(live)} uncensored entries (need 3)")
    if result.censored:
        result.notes.append("censored (no blow-up before t_max): "
                            + ", ".join(repr(e.epsilon) for e in result.censored))
    return result


def is_monotone(result: SweepResult) -> bool:
    """T_est nonincreasing in epsilon, allowing overlap of the uncertainty bands."""
    live = result.uncensored
    for a, b in zip(live[:-1], live[1:]):
        if b.T_est > a.T_est + a.uncertainty + b.uncertainty:
            return False
    return True


@dataclass
class RegimeComparison:
    negative: SweepResult
    positive: SweepResult
    check_negative: object
    check_positive: object

    @property
    def both_pass(self) -> bool:
        return self.check_negative.status == "pass" and self.check_positive.status == "pass"


def compare_regimes(model_neg: ModelParams, model_pos: ModelParams, d: float,
                    config: SolverConfig, epsilons=DEFAULT_EPSILONS, refinements: int = 3,
                    eta: float | None = None, workers: int | None = None) -> RegimeComparison:
    """Sweep one oscillatory and one non-oscillatory model with the same n, mu, p."""
    from .verifier import check_lifespan_inequality

    if not model_neg.delta < 0 < model_pos.delta:
        raise ConfigError(f"need delta_neg < 0 < delta_pos, got {model_neg.delta:.6g} "
                          f"and {model_pos.delta:.6g}")
    if (model_neg.n, model_neg.mu, model_neg.p) != (model_pos.n, model_pos.mu, model_pos.p):
        raise ConfigError("compared models must share n, mu and p")
    out = []
    for model in (model_neg, model_pos):
        params = TestFunctionParams.build(model, d, eta)
        res = sweep(model, params, config, epsilons, refinements, workers=workers)
        out.append((res, check_lifespan_inequality(res, params, model)))
    return RegimeComparison(out[0][0], out[1][0], out[0][1], out[1][1])


def _num(x: float) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))


def write_sweep_csv(result: SweepResult, path) -> None:
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for e in result.entries:
            levels = list(e.times[:3]) + [math.nan] * (3 - len(e.times[:3]))
            w.writerow([repr(e.epsilon)] + [_num(t) for t in levels]
                       + [_num(e.T_est), _num(e.uncertainty), str(e.censored).lower()])


def _json_num(x):
    return None if x is None or not math.isfinite(x) else float(x)


def fit_report(result: SweepResult) -> dict:
    return {"slope_fit": _json_num(result.slope_fit), "slope_theory": _json_num(result.slope_theory),
            "C_emp": _json_num(result.C_emp), "residual": _json_num(result.residual),
            "regime": result.regime}


def write_fit_json(result: SweepResult, path) -> None:
    with atomic_writer(path) as fh:
        json.dump(fit_report(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
