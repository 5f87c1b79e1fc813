"""Explicit finite-difference solver for radial solutions of

    u_tt - Laplacian u + mu/(1+t) u_t + nu^2/(1+t)^2 u = |u_t|^p,

with data ``eps * (f, g)`` supported in the ball of radius R.

Space: uniform radii ``r_i = i*dx``; the radial Laplacian
``u_rr + (n-1)/r u_r`` is replaced by ``n u_rr`` at the origin (even
reflection). For n = 1 the radial grid is the half line of an even solution,
so integrals carry the factor 2 = |S^0|. Homogeneous Dirichlet at the far
end, which the support cone never reaches.

Time: leapfrog in u, with both the damping term and the source ``|u_t|^p``
evaluated at the centred velocity ``z = (u^{k+1} - u^{k-1}) / (2 dt)``. Each
cell then solves the scalar equation ``A z - dt^2 |z|^p = c`` (closed form
for p = 2, monotone Newton otherwise); when it has no real root the discrete
solution cannot be continued, which is the primary blow-up signal. One-sided
velocities are avoided because they amplify the leapfrog parasitic mode.

Only cells inside the numerical cone ``r <= t + R + pad*dx`` are updated; the
rest are exactly zero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import ConfigError, DomainError, InstabilityError
from .special import ModelParams, TestFunctionParams, phi_eta_scaled, sphere_area

_PAD = 24
_NCOL = 10
# sample columns
T, F, G, NL, PSI_MASS, SUP_U, SUP_UT, SUPPORT, ENERGY, STEP = range(_NCOL)

RUNNING, THRESHOLD, DOUBLING, NONFINITE, NO_ROOT = 0, 1, 2, 3, 4
_STATUS_NAMES = {THRESHOLD: "threshold", DOUBLING: "doubling", NONFINITE: "nonfinite",
                 NO_ROOT: "no_root"}


@dataclass(frozen=True)
class SolverConfig:
    dx: float
    t_max: float
    cfl: float = 0.45
    blowup_threshold: float = 1e6
    outer_margin: float = 1.0
    nonlinear: bool = True
    snapshot_every: float = 1.0
    sample_stride: int = 1
    support_tol: float = 1e-2

    def __post_init__(self):
        if not self.dx > 0:
            raise ConfigError(f"dx must be > 0, got {self.dx}")
        if not 0 < self.cfl <= 0.5:
            raise ConfigError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not self.blowup_threshold >= 1e3:
            raise ConfigError("blowup_threshold must be >= 1e3")
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be > 0, got {self.t_max}")
        if self.outer_margin < 0:
            raise ConfigError("outer_margin must be >= 0")
        if self.sample_stride < 1:
            raise ConfigError("sample_stride must be >= 1")

    @property
    def dt(self) -> float:
        """Largest step ``<= cfl * dx`` that divides 1, so integer times are grid levels."""
        return 1.0 / math.ceil(1.0 / (self.cfl * self.dx) - 1e-9)

    def refined(self, level: int) -> "SolverConfig":
        """Same configuration with ``dx / 2**level``."""
        return replace(self, dx=self.dx / 2 ** level)


@dataclass(frozen=True)
class InitialData:
    """Data ``eps * (f, g)`` with ``f = amplitude_f * (1 - r^2/R^2)^power`` (same for g)."""

    epsilon: float
    R: float = 1.0
    amplitude_f: float = 1.0
    amplitude_g: float = 1.0
    profile: str = "bump"
    power: int = 3

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.amplitude_f < 0 or self.amplitude_g < 0:
            raise DomainError("data amplitudes must be non-negative")
        if self.amplitude_f == 0 and self.amplitude_g == 0:
            raise DomainError("f and g vanish identically")
        if self.profile != "bump":
            raise DomainError(f"unknown profile {self.profile!r}")
        if self.power < 2:
            raise DomainError("bump power must be >= 2 for C^1 data")

    def shape(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.where(r < self.R, np.clip(1.0 - (r / self.R) ** 2, 0.0, None) ** self.power, 0.0)

    def f(self, r) -> np.ndarray:
        """Unscaled displacement profile."""
        return self.amplitude_f * self.shape(r)

    def g(self, r) -> np.ndarray:
        """Unscaled velocity profile."""
        return self.amplitude_g * self.shape(r)


def make_initial_data(model: ModelParams, epsilon: float, **profile) -> InitialData:
    """Default bump data ``f = g = (1 - |x|^2/R^2)^3`` scaled by ``epsilon``."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    return InitialData(epsilon=float(epsilon), R=model.R, **profile)


@dataclass
class RadialField:
    """Level ``t``: ``u``, the centred velocity ``v`` and the next level ``u_next``.

    ``v`` is the centred difference of the levels around ``t``, so leapfrog
    continues from ``(u, u_next)`` alone.
    """

    grid: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t: float
    u_next: np.ndarray
    step_index: int = 0
    support_radius: float = 0.0


@dataclass
class Outcome:
    status: str  # "completed" | "blew_up"
    t_detect: float | None = None
    criterion: str | None = None
    steps: int = 0

    @property
    def blew_up(self) -> bool:
        return self.status == "blew_up"


@dataclass
class Trajectory:
    model: ModelParams
    config: SolverConfig
    initial: InitialData
    params: TestFunctionParams | None
    grid: np.ndarray
    snapshots: list = field(default_factory=list)  # (t, u, v) on the active slice
    samples: dict = field(default_factory=dict)
    outcome: Outcome | None = None


# ------------------------------------------------------------------ kernels


@numba.njit(cache=True)
def _radial_laplacian(u, cp, cm, c0, m, out):
    out[0] = c0[0] * (u[1] - u[0])
    for i in range(1, m):
        out[i] = cp[i] * u[i + 1] + cm[i] * u[i - 1] + c0[i] * u[i]


@numba.njit(cache=True)
def _centred_velocity(c, A, D, p, ip, nonlinear):
    """Root of ``A z - D |z|^p = c`` on the branch through ``z = c/A``.

    Returns NaN when no real root exists: the discrete solution cannot be
    continued past this level.
    """
    z = c / A
    if not nonlinear or c == 0.0:
        return z
    if ip == 2:
        disc = A * A - 4.0 * D * c
        if disc < 0.0:
            return math.nan
        return 2.0 * c / (A + math.sqrt(disc))
    for _ in range(60):
        az = abs(z)
        g = A * z - D * az ** p - c
        dg = A - p * D * az ** (p - 1.0) * (1.0 if z >= 0.0 else -1.0)
        if dg <= 0.0:
            return math.nan
        dz = g / dg
        z -= dz
        if abs(dz) <= 1e-15 * abs(z):
            return z
    return math.nan


@numba.njit(cache=True)
def _sample(row, t, u, v, m, M, dx, R, nu_sq, p, ip, d, eta, weights, scaled_phi,
            with_psi, support_tol, ur_w):
    su = 0.0
    sv = 0.0
    for i in range(m):
        au = abs(u[i])
        av = abs(v[i])
        if au > su:
            su = au
        if av > sv:
            sv = av
    cut = support_tol * max(su, sv)
    supp = 0.0
    for i in range(m - 1, -1, -1):
        if abs(u[i]) > cut or abs(v[i]) > cut:
            supp = i * dx
            break
    Fs = 0.0
    Gs = 0.0
    Ns = 0.0
    Ps = 0.0
    if with_psi:
        pref = (1.0 + t) ** (0.5 * d)
        cone = t + R + dx
        top = max(m, min(M + 1, int(cone / dx) + 1))
        for i in range(top):
            ri = i * dx
            psi = pref * math.exp(eta * (ri - t)) * scaled_phi[i] * weights[i]
            if ri <= cone:
                Ps += psi
            if i < m:
                Fs += u[i] * psi
                Gs += v[i] * psi
                av = abs(v[i])
                if av > 0.0:
                    Ns += (av ** ip if ip > 0 else av ** p) * psi
    E = 0.0
    mass = nu_sq / (1.0 + t) ** 2
    for i in range(m):
        E += weights[i] * (v[i] * v[i] + mass * u[i] * u[i])
        du = (u[i + 1] - u[i]) / dx
        E += ur_w[i] * du * du
    row[0] = t
    row[1] = Fs
    row[2] = Gs
    row[3] = Ns
    row[4] = Ps
    row[5] = su
    row[6] = sv
    row[7] = supp
    row[8] = E


@numba.njit(cache=True)
def _march(cur, nxt, v, work, cp, cm, c0, k0, nsteps, dt, dx, R, M, mu, nu_sq, p,
           nonlinear, threshold, sample_stride, samples, n_samples, hist,
           d, eta, weights, scaled_phi, with_psi, support_tol, ur_w):
    """Advance ``nsteps`` levels in place.

    On entry ``cur = u^k``, ``nxt = u^{k+1}`` and ``v = v^k``; on exit the
    same roles hold for the last level reached. Returns
    ``(steps done, status, n_samples)``.
    """
    ip = int(p) if float(int(p)) == p else 0
    D = dt * dt
    for j in range(nsteps):
        kc = k0 + j + 1  # centre level of the leapfrog step
        t = kc * dt
        m = min(M, int((t + R) / dx) + _PAD)
        b = nu_sq / (1.0 + t) ** 2
        h = 0.5 * mu / (1.0 + t) * dt
        A = 2.0 * dt * (1.0 + h)
        vmax = 0.0
        ok = True
        for i in range(m):
            if i == 0:
                lap = c0[0] * (nxt[1] - nxt[0])
            else:
                lap = cp[i] * nxt[i + 1] + cm[i] * nxt[i - 1] + c0[i] * nxt[i]
            rhs = 2.0 * nxt[i] - (1.0 - h) * cur[i] + D * (lap - b * nxt[i])
            if not math.isfinite(rhs):
                return j + 1, 3, n_samples
            z = _centred_velocity(rhs - (1.0 + h) * cur[i], A, D, p, ip, nonlinear)
            if not math.isfinite(z):
                ok = False
                break
            v[i] = z
            work[i] = cur[i] + 2.0 * dt * z
            if abs(z) > vmax:
                vmax = abs(z)
        if not ok:
            return j + 1, 4, n_samples
        for i in range(m):
            cur[i] = nxt[i]
            nxt[i] = work[i]
        # ring buffer of sup|u_t| for the doubling criterion
        hist[kc % 10] = vmax
        if kc % sample_stride == 0 and n_samples < samples.shape[0]:
            _sample(samples[n_samples], t, cur, v, m, M, dx, R, nu_sq, p, ip, d, eta,
                    weights, scaled_phi, with_psi, support_tol, ur_w)
            samples[n_samples, 9] = kc
            n_samples += 1
        if vmax >= threshold:
            return j + 1, 1, n_samples
        old = hist[(kc + 1) % 10]
        if kc >= 10 and vmax >= 1e-3 * threshold and vmax >= 2.0 * old:
            return j + 1, 2, n_samples
    return nsteps, 0, n_samples


# ------------------------------------------------------------- public API


class _Grid:
    """Grid-dependent arrays shared by ``step`` and ``run``."""

    def __init__(self, model: ModelParams, dx: float, M: int):
        n = model.n
        self.M = M
        self.r = np.arange(self.M + 1) * dx
        r = self.r
        self.cp = np.zeros(self.M + 1)
        self.cm = np.zeros(self.M + 1)
        self.c0 = np.full(self.M + 1, -2.0 / dx ** 2)
        self.cp[1:] = 1.0 / dx ** 2 + (n - 1) / (2.0 * dx * r[1:])
        self.cm[1:] = 1.0 / dx ** 2 - (n - 1) / (2.0 * dx * r[1:])
        self.c0[0] = 2.0 * n / dx ** 2
        omega = sphere_area(n)
        w = omega * r ** (n - 1) * dx
        w[0] *= 0.5
        self.weights = w
        # |u_r|^2 weights at cell midpoints
        self.ur_w = omega * (r + 0.5 * dx) ** (n - 1) * dx


def _grid_for(model: ModelParams, config: SolverConfig) -> _Grid:
    M = int(math.ceil((model.R + config.t_max + config.outer_margin) / config.dx)) + _PAD
    return _Grid(model, config.dx, M)


def _initial_levels(initial: InitialData, model: ModelParams, config: SolverConfig, grid: _Grid):
    eps = initial.epsilon
    u0 = eps * initial.f(grid.r)
    v0 = eps * initial.g(grid.r)
    u0[-1] = v0[-1] = 0.0
    lap = np.zeros_like(u0)
    _radial_laplacian(u0, grid.cp, grid.cm, grid.c0, grid.M, lap)
    src = np.abs(v0) ** model.p if config.nonlinear else 0.0
    acc = lap - model.mu * v0 - model.nu_sq * u0 + src
    dt = config.dt
    # Taylor start; equals the first leapfrog step with centred velocity v0
    u1 = u0 + dt * v0 + 0.5 * dt * dt * acc
    u1[-1] = 0.0
    return u0, v0, u1


def initial_field(initial: InitialData, model: ModelParams, config: SolverConfig) -> RadialField:
    """Level t = 0 on a grid wide enough for ``config.t_max``."""
    grid = _grid_for(model, config)
    u0, v0, u1 = _initial_levels(initial, model, config, grid)
    return RadialField(grid.r, u0, v0, 0.0, u1, 0,
                       support_radius(grid.r, u0, v0, config.support_tol))


def support_radius(r, u, v, tol: float = 1e-2) -> float:
    """Largest radius where ``|u|`` or ``|v|`` exceeds ``tol`` times the sup of both.

    The centred scheme spreads a derivative jump at the wave front into a
    dispersive tail of width ~ (t dx^2)^(1/3); the cut-off sits above that
    tail, whose amplitude shrinks under refinement.
    """
    scale = max(np.max(np.abs(u)), np.max(np.abs(v)))
    if scale == 0:
        return 0.0
    idx = np.nonzero((np.abs(u) > tol * scale) | (np.abs(v) > tol * scale))[0]
    return float(r[idx[-1]])


def step(field_: RadialField, model: ModelParams, config: SolverConfig) -> RadialField:
    """Advance one time step; the input field is left untouched."""
    dx = config.dx
    if not np.isclose(field_.grid[1] - field_.grid[0], dx):
        raise ConfigError("field grid spacing does not match config.dx")
    if not (np.all(np.isfinite(field_.u)) and np.all(np.isfinite(field_.v))):
        raise InstabilityError("field is not finite; the run is no longer alive")
    grid = _Grid(model, dx, field_.grid.size - 1)
    cur, nxt, v = field_.u.copy(), field_.u_next.copy(), field_.v.copy()
    _, status, _ = _march(
        cur, nxt, v, np.zeros_like(cur), grid.cp, grid.cm, grid.c0, field_.step_index, 1,
        config.dt, dx, model.R, grid.M, model.mu, model.nu_sq, model.p, config.nonlinear,
        math.inf, 1, np.zeros((1, _NCOL)), 1, np.zeros(10), 0.0, 1.0, grid.weights,
        np.zeros(grid.M + 1), False, config.support_tol, grid.ur_w)
    k = field_.step_index + 1
    if status in (NONFINITE, NO_ROOT):
        raise InstabilityError(
            f"no finite continuation at t={k * config.dt:.6g} ({_STATUS_NAMES[status]})")
    return RadialField(field_.grid, cur, v, k * config.dt, nxt, k,
                       support_radius(field_.grid, cur, v, config.support_tol))


def _oscillating(v: np.ndarray) -> bool:
    """Grid-scale sign alternation around the peak, the signature of an unstable run."""
    finite = np.where(np.isfinite(v), v, 0.0)
    if not np.any(finite):
        return True
    i = int(np.argmax(np.abs(finite)))
    lo, hi = max(i - 2, 0), min(i + 3, v.size)
    window = finite[lo:hi]
    opposite = np.sign(window) == -np.sign(finite[i])
    return bool(np.any(opposite) and np.max(np.abs(window[opposite])) > 0.5 * abs(finite[i]))


def run(initial: InitialData, model: ModelParams, config: SolverConfig,
        params: TestFunctionParams | None = None) -> Trajectory:
    """Integrate until ``config.t_max`` or blow-up.

    Blow-up is declared at the first level where the centred-velocity
    equation has no real root, where ``sup|u_t|`` reaches
    ``config.blowup_threshold``, or where ``sup|u_t|`` doubles within 10 steps
    once above a thousandth of the threshold. When ``params`` is given the
    psi-weighted integrals are sampled every ``config.sample_stride`` steps
    inside the time loop.
    """
    grid = _grid_for(model, config)
    dt, dx = config.dt, config.dx
    cur, v, nxt = _initial_levels(initial, model, config, grid)
    work = np.zeros_like(cur)
    n_steps_max = int(math.ceil(config.t_max / dt - 1e-9))
    samples = np.zeros((n_steps_max // config.sample_stride + 2, _NCOL))
    if params is not None:
        scaled_phi = phi_eta_scaled(grid.r, params.eta, model.n)
        d, eta = params.d, params.eta
    else:
        scaled_phi = np.zeros(grid.M + 1)
        d, eta = 0.0, 1.0
    m0 = min(grid.M, int(model.R / dx) + _PAD)
    ip = int(model.p) if float(int(model.p)) == model.p else 0
    _sample(samples[0], 0.0, cur, v, m0, grid.M, dx, model.R, model.nu_sq, model.p, ip,
            d, eta, grid.weights, scaled_phi, params is not None, config.support_tol, grid.ur_w)
    n_samples = 1
    hist = np.zeros(10)
    traj = Trajectory(model, config, initial, params, grid.r)
    traj.snapshots.append((0.0, cur[:m0].copy(), v[:m0].copy()))
    chunk = max(1, int(round(config.snapshot_every / dt)))
    k = 0
    status = RUNNING
    while k < n_steps_max:
        nsteps = min(chunk, n_steps_max - k)
        done, status, n_samples = _march(
            cur, nxt, v, work, grid.cp, grid.cm, grid.c0, k, nsteps, dt, dx, model.R,
            grid.M, model.mu, model.nu_sq, model.p, config.nonlinear,
            config.blowup_threshold, config.sample_stride, samples, n_samples, hist,
            d, eta, grid.weights, scaled_phi, params is not None, config.support_tol,
            grid.ur_w)
        k += done
        if status != RUNNING:
            break
        m = min(grid.M, int((k * dt + model.R) / dx) + _PAD)
        traj.snapshots.append((k * dt, cur[:m].copy(), v[:m].copy()))
    samples = samples[:n_samples]
    if status == RUNNING:
        traj.outcome = Outcome("completed", None, None, k)
    else:
        if status == NONFINITE and _oscillating(v):
            raise InstabilityError(
                f"solution diverged at t={k * dt:.6g} with grid-scale oscillation; "
                "refine dx or lower cfl")
        traj.outcome = Outcome("blew_up", k * dt, _STATUS_NAMES[status], k)
        # the detection level is not part of the live trace
        if samples.shape[0] and samples[-1, STEP] == k:
            samples = samples[:-1]
    traj.samples = {name: samples[:, col].copy() for name, col in
                    zip(("t", "F", "G", "NL", "psi_mass", "sup_u", "sup_ut", "support",
                         "energy", "step"), range(_NCOL))}
    return traj


def blowup_time_extrapolate(times) -> tuple[float, float]:
    """Extrapolate detection times from runs at dx, dx/2, dx/4.

    The observed order is clamped to [1, 2]; the uncertainty is the spread of
    the two finest levels. A non-monotone sequence returns the finest value
    with the full spread as uncertainty.
    """
    t1, t2, t4 = (float(x) for x in times)
    d12, d24 = t1 - t2, t2 - t4
    if d24 == 0.0:
        return t4, 0.0
    if d12 * d24 < 0 or d12 == 0.0:
        return t4, max(t1, t2, t4) - min(t1, t2, t4)
    order = min(2.0, max(1.0, math.log2(d12 / d24)))
    return t4 - d24 / (2.0 ** order - 1.0), abs(d24)


def write_trajectory_csv(traj: Trajectory, path, stride: int = 1) -> None:
    """Columns ``t, r, u, v``; every ``stride``-th radius of every snapshot."""
    from ._io import atomic_writer

    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "r", "u", "v"])
        for t, u, v in traj.snapshots:
            r = traj.grid[:u.size]
            for i in range(0, u.size, stride):
                w.writerow([repr(float(t)), repr(float(r[i])), repr(float(u[i])), repr(float(v[i]))])
