"""Command-line entry point: ``blowuplab verify | simulate | sweep | special``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings

import numpy as np

from . import config as cfgmod
from . import special as sf
from .errors import ConfigError, DomainError, InstabilityError
from .functionals import compute_trace, data_constants, write_trace_csv
from .lifespan import (fit_report, is_monotone, run_tasks, sweep, write_fit_json,
                       write_sweep_csv)
from .solver import InitialData, run, write_trajectory_csv
from .verifier import (FAIL, check_lifespan_inequality, check_proof_chain, static_checks,
                       write_ledger)

log = logging.getLogger("blowuplab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_CENSORED = 0, 1, 2, 3, 4

EPILOG = """\
exit codes:
  0  success
  1  verify: at least one check failed
  2  configuration or domain error (e.g. d <= mu, theta <= 0, bad arguments)
  3  numerical instability without a blow-up signature (refine dx)
  4  sweep: every run censored (no blow-up before t_max)

environment:
  BLOWUPLAB_THREADS  cap on concurrent simulations (default: CPU count)
"""


def _trace_task(args):
    model, params, solver, data = args
    traj = run(data, model, solver, params)
    return compute_trace(traj, params, model)


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def cmd_verify(cfg: cfgmod.RunConfig) -> int:
    model, params = cfg.model, cfg.test_fn
    c0, c1 = data_constants(cfg.data, params, model)
    results = static_checks(params, model, c0, c1)

    data = InitialData(cfg.verify_epsilon, model.R, cfg.data.amplitude_f, cfg.data.amplitude_g,
                       power=cfg.data.power)
    solver = cfg.solver
    tasks = [(model, params, solver.refined(k), data) for k in range(cfg.refinements)]
    traces = run_tasks(_trace_task, tasks)
    if not traces[-1].blew_up:
        log.warning("verification run did not blow up before t_max; chain covers [0, t_max]")
    results += check_proof_chain(traces, params, model, c0, c1, cfg.verify_epsilon)

    if params.theta > 0 and len(cfg.verify_epsilons) >= 3:
        sw = sweep(model, params, solver, cfg.verify_epsilons, cfg.refinements)
        results.append(check_lifespan_inequality(sw, params, model))
    results.sort(key=lambda r: r.check_id)

    width = max(len(r.check_id) for r in results)
    print(f"{'check_id':<{width}}  {'status':<8} {'margin':>12}  trend")
    for r in results:
        print(f"{r.check_id:<{width}}  {r.status:<8} {_fmt(r.margin):>12}  {r.refinement_trend}")
    write_ledger(results, cfg.output_dir / "ledger.json")
    n_fail = sum(r.status == FAIL for r in results)
    print(f"{len(results)} checks, {n_fail} failed; ledger: {cfg.output_dir / 'ledger.json'}")
    return EXIT_FAIL if n_fail else EXIT_OK


def cmd_simulate(cfg: cfgmod.RunConfig) -> int:
    model, params = cfg.model, cfg.test_fn
    traj = run(cfg.data, model, cfg.solver, params)
    trace = compute_trace(traj, params, model)
    out = cfg.output_dir
    write_trajectory_csv(traj, out / "trajectory.csv", stride=cfg.trajectory_stride)
    write_trace_csv(trace, out / "trace.csv")
    oc = traj.outcome
    if oc.blew_up:
        print(f"outcome: blew_up  T_detect = {oc.t_detect!r}  criterion = {oc.criterion}")
    else:
        print(f"outcome: completed at t = {cfg.solver.t_max!r}")
    print(f"wrote {out / 'trajectory.csv'} and {out / 'trace.csv'}")
    return EXIT_OK


def cmd_sweep(cfg: cfgmod.RunConfig) -> int:
    model, params = cfg.model, cfg.test_fn
    res = sweep(model, params, cfg.solver, cfg.epsilons, cfg.refinements)
    out = cfg.output_dir
    write_sweep_csv(res, out / "sweep.csv")
    write_fit_json(res, out / "fit.json")
    for e in res.entries:
        tag = "censored" if e.censored else f"T_est = {e.T_est:.6g} +- {e.uncertainty:.2g}"
        print(f"eps = {e.epsilon:<8g} {tag}")
    for note in res.notes:
        log.warning(note)
    if not res.uncensored:
        print("all runs censored")
        return EXIT_CENSORED
    rep = fit_report(res)
    print(f"slope_fit = {_fmt(rep['slope_fit'])}  slope_theory = {_fmt(rep['slope_theory'])}")
    if len(res.entries) >= 3:
        chk = check_lifespan_inequality(res, params, model)
        print(f"bound consistency: {chk.status} ({chk.detail}); "
              f"monotone: {'yes' if is_monotone(res) else 'no'}")
    else:
        log.warning("fewer than 3 epsilon values: bound consistency not assessed")
    print(f"wrote {out / 'sweep.csv'} and {out / 'fit.json'}")
    return EXIT_OK


# ------------------------------------------------------------------ special


def _model(a) -> sf.ModelParams:
    return sf.ModelParams(a.n, a.mu, a.nu_sq, a.p, a.R)


def _params(a) -> sf.TestFunctionParams:
    return sf.TestFunctionParams.build(_model(a), a.d, a.eta)


SPECIAL = {
    "phi": (("n", "eta", "r"), lambda a: sf.phi_eta(a.r, a.eta, a.n)),
    "rho": (("d", "eta", "t"), lambda a: sf.rho_d_eta(a.t, a.d, a.eta)),
    "psi": (("n", "mu", "nu_sq", "p", "d", "eta", "r", "t"),
            lambda a: sf.psi_d_eta(a.r, a.t, _params(a), a.n)),
    "besselk": (("alpha", "t"), lambda a: sf.bessel_K(a.alpha, a.t)),
    "xi": (("n", "mu", "nu_sq", "p", "eta", "t"), lambda a: sf.xi_eta(a.t, a.eta, _model(a))),
    "kernel": (("mu", "nu_sq", "d", "eta", "t"),
               lambda a: sf.kernel_K(a.t, _params(a), _model(a))),
    "gamma": (("mu", "nu_sq", "d", "eta", "t"),
              lambda a: sf.gamma_coeffs(a.t, _params(a), _model(a))),
    "lambda": (("mu", "nu_sq", "d", "eta", "t"),
               lambda a: sf.lambda_sigma(a.t, _params(a), _model(a), 0.0, 0.0)[0]),
    "glassey": (("n_eff",), lambda a: sf.glassey_exponent(a.n_eff)),
    "discriminant": (("mu", "nu_sq"), lambda a: sf.discriminant(a.mu, a.nu_sq)),
    "transform": (("mu", "nu_sq", "alpha"),
                  lambda a: sf.transform_coefficients(a.mu, a.nu_sq, a.alpha)),
    "thresholds": (("n", "mu", "nu_sq", "p", "d"), lambda a: sf.thresholds(_model(a), a.d)),
    "lifespan-exponent": (("n", "mu", "nu_sq", "p", "d"),
                          lambda a: sf.lifespan_exponent(_model(a), a.d)),
}

_SPECIAL_DEFAULTS = {"n": 1, "mu": 0.5, "nu_sq": 0.25, "p": 2.0, "d": 1.0, "eta": None,
                     "R": 1.0, "t": 0.0, "r": 0.0, "alpha": 0.0, "n_eff": 2.0}


def _show(value) -> str:
    if isinstance(value, tuple):
        return "\n".join(_show(v) for v in value)
    if hasattr(value, "__dataclass_fields__"):
        return "\n".join(f"{k} = {getattr(value, k)!r}" for k in value.__dataclass_fields__)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    return "\n".join(f"{x:.15g}" for x in arr)


def cmd_special(args) -> int:
    _, fn = SPECIAL[args.function]
    if args.function in ("phi", "rho", "xi") and args.eta is None:
        raise ConfigError("--eta is required")
    print(_show(fn(args)))
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    dflt = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file (defaults embedded)",
                        **dflt)
    common.add_argument("--output", metavar="DIR", help="output directory (created if missing)",
                        **dflt)
    common.add_argument("--refinements", type=int, metavar="N",
                        help="grid levels dx, dx/2, ... (default from config: 3)", **dflt)
    common.add_argument("--print-defaults", action="store_true",
                        help="print the default configuration and exit", **dflt)
    common.add_argument("-v", "--verbose", action="store_true", **dflt)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(False)
    ap = argparse.ArgumentParser(
        prog="blowuplab", parents=[common], epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Test-function verification and blow-up lifespans for "
                    "u_tt - Lap u + mu/(1+t) u_t + nu^2/(1+t)^2 u = |u_t|^p.")
    sub = ap.add_subparsers(dest="command")
    kw = dict(parents=[_common(True)], epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub.add_parser("verify", help="run the full check ledger", **kw)
    sub.add_parser("simulate", help="single run; trajectory and trace CSV", **kw)
    sub.add_parser("sweep", help="epsilon sweep; sweep CSV and fit JSON", **kw)
    sp = sub.add_parser("special", help="evaluate a special function", **kw)
    sp.add_argument("function", choices=sorted(SPECIAL))
    for name, default in _SPECIAL_DEFAULTS.items():
        typ = int if name == "n" else float
        sp.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=default)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    warnings.simplefilter("default")
    if args.print_defaults:
        sys.stdout.write(cfgmod.DEFAULTS)
        return EXIT_OK
    if args.command is None:
        ap.print_help()
        return EXIT_CONFIG
    try:
        if args.command == "special":
            return cmd_special(args)
        cfg = cfgmod.load(args.config, output=args.output, refinements=args.refinements,
                          need_sweep=args.command == "sweep")
        return {"verify": cmd_verify, "simulate": cmd_simulate, "sweep": cmd_sweep}[
            args.command](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())
