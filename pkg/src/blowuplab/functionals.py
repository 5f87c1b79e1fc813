"""psi-weighted functionals of a solver trajectory.

F(t) = int u psi,  G(t) = int u_t psi,  NL(t) = int |u_t|^p psi, plus the
cumulative nonlinear integral, L, H = G - L, the Hoelder ratio and the
residual of the integrated weak identity. Space integrals are trapezoid
sums on the solver grid; time integrals are trapezoid sums on sample times.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_writer
from .solver import InitialData, Trajectory
from .special import (ModelParams, TestFunctionParams, gamma_coeffs, gauss_legendre,
                      kernel_K, phi_eta, phi_eta_scaled, sphere_area)

# time differences are trusted while h * sup|u_t|^(p-1) stays below this,
# h the sample spacing (the ODE time scale of the blow-up is sup|u_t|^(1-p))
RESOLUTION = 1e-2

TRACE_COLUMNS = ("t", "F", "G", "NL", "NL_cum", "L", "H", "holder_ratio", "weak_residual",
                 "sup_u", "sup_ut")


@dataclass
class FunctionalTrace:
    times: np.ndarray
    F: np.ndarray
    G: np.ndarray
    NL: np.ndarray
    NL_cum0: np.ndarray  # int_0^t NL
    NL_cum: np.ndarray  # int_1^t NL, NaN before t = 1
    L: np.ndarray | None
    H: np.ndarray | None
    holder_ratio: np.ndarray
    weak_residual: np.ndarray
    dFdt: np.ndarray
    psi_mass: np.ndarray
    sup_u: np.ndarray
    sup_ut: np.ndarray
    support: np.ndarray
    epsilon: float
    C0: float
    C1: float
    dx: float
    params: TestFunctionParams
    model: ModelParams
    blew_up: bool = False
    t_detect: float | None = None
    resolved: np.ndarray | None = None  # samples where finite differences in t are trusted
    extras: dict = field(default_factory=dict)

    @property
    def has_L(self) -> bool:
        return self.L is not None

    def after(self, t0: float) -> np.ndarray:
        """Boolean mask of samples with ``t >= t0``."""
        return self.times >= t0 - 1e-12


def _radial_quadrature(fun, R: float, n: int, panels: int = 16, nodes: int = 32) -> float:
    xg, wg = gauss_legendre(nodes)
    edges = np.linspace(0.0, R, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        r = 0.5 * (b - a) * (xg + 1.0) + a
        total += 0.5 * (b - a) * np.dot(wg, fun(r) * r ** (n - 1))
    return sphere_area(n) * total


def data_constants(initial: InitialData, params: TestFunctionParams, model: ModelParams):
    """``(C0, C1)`` for the unscaled data (f, g).

    C0 = int (f + g) phi;  C1 = (eta + (2 mu - d)/2) int f phi + int g phi.
    """
    n, eta = model.n, params.eta
    int_f = _radial_quadrature(lambda r: initial.f(r) * phi_eta(r, eta, n), initial.R, n)
    int_g = _radial_quadrature(lambda r: initial.g(r) * phi_eta(r, eta, n), initial.R, n)
    c0 = int_f + int_g
    c1 = (eta + (2.0 * model.mu - params.d) / 2.0) * int_f + int_g
    return c0, c1


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _derivative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    if y.size < 3:
        return np.full_like(y, np.nan)
    return np.gradient(y, t, edge_order=2)


def sample_snapshots(traj: Trajectory, params: TestFunctionParams) -> dict:
    """psi-weighted integrals from stored snapshots (coarser than in-loop sampling)."""
    model = traj.model
    n, p, dx = model.n, model.p, traj.config.dx
    r_all = traj.grid
    w_all = sphere_area(n) * r_all ** (n - 1) * dx
    w_all[0] *= 0.5
    s_all = phi_eta_scaled(r_all, params.eta, n)
    rows = []
    for t, u, v in traj.snapshots:
        m = u.size
        psi = ((1.0 + t) ** (0.5 * params.d) * np.exp(params.eta * (r_all - t)) * s_all * w_all)
        cone = r_all <= t + model.R + dx
        rows.append((t, np.dot(u, psi[:m]), np.dot(v, psi[:m]), np.dot(np.abs(v) ** p, psi[:m]),
                     psi[cone].sum(), np.abs(u).max(), np.abs(v).max()))
    arr = np.array(rows)
    keys = ("t", "F", "G", "NL", "psi_mass", "sup_u", "sup_ut")
    return {k: arr[:, i] for i, k in enumerate(keys)}


def compute_trace(traj: Trajectory, params: TestFunctionParams, model: ModelParams | None = None,
                  constants: tuple[float, float] | None = None) -> FunctionalTrace:
    """Assemble the functional trace of a run.

    Uses the in-loop samples when the run was made with the same test
    function, otherwise integrates the stored snapshots.
    """
    model = model or traj.model
    if traj.params == params and "F" in traj.samples:
        s = traj.samples
    else:
        s = sample_snapshots(traj, params)
    t = s["t"]
    eps = traj.initial.epsilon
    c0, c1 = constants if constants is not None else data_constants(traj.initial, params, model)
    F, G, NL = s["F"], s["G"], s["NL"]
    nl_cum0 = _cumtrapz(NL, t)
    dFdt = _derivative(F, t)
    gamma, _, _ = gamma_coeffs(t, params, model)
    kf_cum = _cumtrapz(kernel_K(t, params, model) * F, t)
    weak = dFdt + gamma * F + kf_cum - nl_cum0 - eps * c1

    hit = np.nonzero(np.abs(t - 1.0) <= 1e-9)[0]
    if hit.size:
        nl_cum = np.where(t >= 1.0 - 1e-12, nl_cum0 - nl_cum0[hit[0]], np.nan)
        L = np.where(t >= 1.0 - 1e-12, nl_cum / 8.0 + c0 * eps / 24.0, np.nan)
        H = G - L
    else:
        nl_cum = np.full_like(t, np.nan)
        L = H = None

    ratio = holder_value(NL, s["psi_mass"], G, model.p)
    h = np.diff(t, prepend=t[0], append=t[-1])
    h = np.maximum(h[:-1], h[1:])
    resolved = np.cumprod(h * s["sup_ut"] ** (model.p - 1.0) <= RESOLUTION).astype(bool)
    outcome = traj.outcome
    return FunctionalTrace(
        times=t, F=F, G=G, NL=NL, NL_cum0=nl_cum0, NL_cum=nl_cum, L=L, H=H,
        holder_ratio=ratio, weak_residual=weak, dFdt=dFdt, psi_mass=s["psi_mass"],
        sup_u=s["sup_u"], sup_ut=s["sup_ut"], support=s.get("support", np.full_like(t, np.nan)),
        epsilon=eps, C0=c0, C1=c1, dx=traj.config.dx, params=params, model=model,
        blew_up=bool(outcome and outcome.blew_up),
        t_detect=outcome.t_detect if outcome else None, resolved=resolved)


def holder_value(NL, mass, G, p: float) -> np.ndarray:
    """``NL * mass^(p-1) / G^p``; NaN where ``G <= 0`` (sample skipped)."""
    NL, mass, G = (np.asarray(a, dtype=float) for a in (NL, mass, G))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(G > 0, NL * mass ** (p - 1.0) / np.abs(G) ** p, np.nan)


def holder_ratio(trace: FunctionalTrace, params: TestFunctionParams | None = None,
                 model: ModelParams | None = None) -> np.ndarray:
    """``NL * (int_cone psi)^(p-1) / G^p``; at least 1 by Hoelder, NaN where G <= 0."""
    model = model or trace.model
    return holder_value(trace.NL, trace.psi_mass, trace.G, model.p)


@dataclass
class BoundResult:
    name: str
    anchor: str
    margin: float  # min over samples of lhs - rhs
    t_at_min: float
    holds: bool
    status: str  # "pass" | "fail" | "vacuous" | "not_applicable"
    note: str = ""


@dataclass
class LowerBoundReport:
    results: list

    @property
    def all_hold(self) -> bool:
        return all(r.status in ("pass", "vacuous") for r in self.results)

    def __getitem__(self, name: str) -> BoundResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def _bound(name, anchor, t, lhs, rhs, mask, applicable, strict=False):
    if not applicable:
        return BoundResult(name, anchor, math.nan, math.nan, False, "not_applicable",
                           "eta below the threshold of this bound")
    if not np.any(mask):
        return BoundResult(name, anchor, math.nan, math.nan, False, "vacuous", "no samples")
    diff = (lhs - rhs)[mask]
    i = int(np.argmin(diff))
    tol = 1e-12 * np.max(np.abs(lhs[mask]))
    holds = bool(np.all(diff > tol)) if strict else bool(np.all(diff >= -tol))
    return BoundResult(name, anchor, float(diff[i]), float(t[mask][i]), holds,
                       "pass" if holds else "fail")


def check_lower_bounds(trace: FunctionalTrace, params: TestFunctionParams, model: ModelParams,
                       C0: float | None = None, epsilon: float | None = None) -> LowerBoundReport:
    """Positivity and lower bounds of F and G along the live part of the run.

    F > 0 on [0, T) and F >= eps C0/(4 eta) on [1, T) need eta >= eta_0;
    G >= 0 on [0, T) and G >= eps C0/18 on [1, T) need eta >= eta_1.
    Zero data makes every bound vacuous.
    """
    C0 = trace.C0 if C0 is None else C0
    eps = trace.epsilon if epsilon is None else epsilon
    t = trace.times
    all_t = np.ones_like(t, dtype=bool)
    late = trace.after(1.0)
    if eps == 0:
        names = [("F_positive", "F positive on [0, T)"), ("F_lower", "F >= eps C0/(4 eta) on [1, T)"),
                 ("G_nonnegative", "G nonnegative on [0, T)"), ("G_lower", "G >= eps C0/18 on [1, T)")]
        return LowerBoundReport([BoundResult(n_, a, 0.0, math.nan, True, "vacuous",
                                             "zero data: both sides vanish") for n_, a in names])
    f_ok = params.eta >= params.eta_0 - 1e-12
    g_ok = params.eta >= params.eta_1 - 1e-12
    zeros = np.zeros_like(t)
    results = [
        _bound("F_positive", "F positive on [0, T)", t, trace.F, zeros, all_t, f_ok, strict=True),
        _bound("F_lower", "F >= eps C0/(4 eta) on [1, T)", t, trace.F, zeros + eps * C0 / (4.0 * params.eta), late, f_ok),
        _bound("G_nonnegative", "G nonnegative on [0, T)", t, trace.G, zeros, all_t, g_ok),
        _bound("G_lower", "G >= eps C0/18 on [1, T)", t, trace.G, zeros + eps * C0 / 18.0, late, g_ok),
    ]
    return LowerBoundReport(results)


def write_trace_csv(trace: FunctionalTrace, path, stride: int = 1) -> None:
    """Trace CSV with the documented column order."""
    nan = np.full_like(trace.times, np.nan)
    cols = [trace.times, trace.F, trace.G, trace.NL, trace.NL_cum,
            trace.L if trace.L is not None else nan, trace.H if trace.H is not None else nan,
            trace.holder_ratio, trace.weak_residual, trace.sup_u, trace.sup_ut]
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i in range(0, trace.times.size, stride):
            w.writerow([repr(float(c[i])) for c in cols])
