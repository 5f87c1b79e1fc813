"""Explicit functions behind the test-function construction.

Everything here is a pure function of its arguments. Array arguments are
broadcast with numpy; scalar inputs give numpy scalars back.

The spatial weight ``phi_eta`` grows like ``exp(eta * |x|)``, so the solver
side works with :func:`phi_eta_scaled` (the weight times ``exp(-eta |x|)``)
and recombines exponents before multiplying, which keeps ``psi_d_eta`` finite
far out on the light cone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, UnsupportedRegimeError

# exp(-46.05) ~ 1e-20: integrand cut-off used by both quadratures below
_TAIL_LOG = 46.05
_PHI_NODES = 64
_PHI_RTOL = 1e-12
_PHI_MAX_NODES = 4096
_BESSEL_PANELS = 16
_BESSEL_NODES = 16
_BESSEL_RTOL = 1e-13


@lru_cache(maxsize=None)
def gauss_legendre(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n (2 for n = 1)."""
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


# ---------------------------------------------------------------- parameters


def glassey_exponent(n_eff: float) -> float:
    """Critical power ``1 + 2/(n_eff - 1)`` for the derivative nonlinearity."""
    if not n_eff > 1.0:
        raise DomainError(f"Glassey exponent needs n_eff > 1, got {n_eff}")
    return 1.0 + 2.0 / (n_eff - 1.0)


def discriminant(mu, nu_sq):
    """``(mu - 1)^2 - 4 nu^2``; its sign separates (non-)oscillatory linear decay."""
    return (np.asarray(mu, dtype=float) - 1.0) ** 2 - 4.0 * np.asarray(nu_sq, dtype=float)


def transform_coefficients(mu, nu_sq, alpha):
    """Coefficients after the substitution ``V = (1+t)^alpha U``.

    Returns ``(mu - 2 alpha, alpha^2 - (mu - 1) alpha + nu^2)``; the
    discriminant of the pair is unchanged.
    """
    mu = np.asarray(mu, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return mu - 2.0 * alpha, alpha * alpha - (mu - 1.0) * alpha + np.asarray(nu_sq, dtype=float)


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the damped/massive wave equation and the data radius."""

    n: int
    mu: float
    nu_sq: float
    p: float
    R: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if self.mu < 0:
            raise DomainError(f"mu must be >= 0, got {self.mu}")
        if self.nu_sq < 0:
            raise DomainError(f"nu_sq must be >= 0, got {self.nu_sq}")
        if not self.p > 1:
            raise DomainError(f"p must be > 1, got {self.p}")
        if not self.R > 0:
            raise DomainError(f"R must be > 0, got {self.R}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def nu(self) -> float:
        return math.sqrt(self.nu_sq)

    @property
    def delta(self) -> float:
        return float(discriminant(self.mu, self.nu_sq))

    @property
    def p_glassey(self) -> float:
        """p_Gla(n + mu); infinite when n + mu <= 1."""
        n_eff = self.n + self.mu
        return glassey_exponent(n_eff) if n_eff > 1 else math.inf

    @property
    def d_upper(self) -> float:
        """Right end of the admissible shift interval, ``(p+1)/(p-1) - n``."""
        return (self.p + 1.0) / (self.p - 1.0) - self.n

    def default_d(self) -> float:
        """Shift close to the lower end of the admissible interval."""
        return self.mu + 0.1 * (self.d_upper - self.mu)


def _kernel_ratio(d: float, mu: float, nu_sq: float) -> float:
    return (4.0 * nu_sq + (d - 2.0 * mu) * (d - 2.0)) / (4.0 * (d - mu))


@dataclass(frozen=True)
class Thresholds:
    ratio: float
    eta_tilde: float
    eta_0: float
    eta_1_statement: float
    eta_1_proof: float
    eta_1: float


def thresholds(model: ModelParams, d: float) -> Thresholds:
    """All lower bounds on eta: kernel sign, F bounds and G bounds.

    ``eta_1`` is the largest of every bound that the lower bound for the
    velocity functional G relies on, including those only needed in its derivation.
    """
    if not d > model.mu:
        raise DomainError(f"need d > mu, got d={d}, mu={model.mu}")
    ratio = _kernel_ratio(d, model.mu, model.nu_sq)
    nu = model.nu
    eta_tilde = max(2.0, ratio)
    eta_0 = max(d + 2.0, ratio)
    stated = max(2.0 * d + 2.0 * model.mu + 2.0 * nu + 2.0, ratio)
    proof = max(max(eta_0, 2.0 * (d + nu + 1.0)), d + model.mu)
    return Thresholds(ratio, eta_tilde, eta_0, stated, proof, max(stated, proof))


@dataclass(frozen=True)
class TestFunctionParams:
    """Shift ``d`` and decay rate ``eta`` of psi, with the derived thresholds."""

    __test__ = False  # not a pytest class

    d: float
    eta: float
    eta_tilde: float
    eta_0: float
    eta_1: float
    theta: float

    @classmethod
    def build(cls, model: ModelParams, d: float, eta: float | None = None) -> "TestFunctionParams":
        """Derive thresholds for ``model``; ``eta`` defaults to ``eta_1``."""
        th = thresholds(model, d)
        if eta is None:
            eta = th.eta_1
        if not eta > 0:
            raise DomainError(f"eta must be > 0, got {eta}")
        theta = 1.0 - (model.n + d - 1.0) * (model.p - 1.0) / 2.0
        return cls(float(d), float(eta), th.eta_tilde, th.eta_0, th.eta_1, theta)


# ---------------------------------------------------------- test functions


def _check_phi_args(x, eta):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("phi_eta needs |x| >= 0")
    if not eta > 0:
        raise DomainError(f"eta must be > 0, got {eta}")
    return x


def _polar_integral_scaled(s: np.ndarray, n: int, n_nodes: int) -> np.ndarray:
    """|S^{n-2}| int_0^pi exp(s (cos th - 1)) sin^{n-2} th dth, truncated where negligible."""
    xg, wg = gauss_legendre(n_nodes)
    with np.errstate(divide="ignore", over="ignore"):
        c = np.where(s > _TAIL_LOG / 2.0, 1.0 - _TAIL_LOG / np.where(s > 0, s, 1.0), -1.0)
    th_max = np.arccos(np.clip(c, -1.0, 1.0))
    th = 0.5 * th_max[:, None] * (xg[None, :] + 1.0)
    f = np.exp(s[:, None] * (np.cos(th) - 1.0))
    if n > 2:
        f = f * np.sin(th) ** (n - 2)
    return sphere_area(n - 1) * 0.5 * th_max * (f @ wg)


def phi_eta_scaled(x, eta: float, n: int):
    """``exp(-eta |x|) * phi_eta(|x|)``, bounded for all ``|x|``."""
    x = _check_phi_args(x, eta)
    if n == 1:
        return 1.0 + np.exp(-2.0 * eta * x)
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    s = np.atleast_1d(eta * x).ravel()
    out = np.empty_like(s)
    chunk = 8192
    for lo in range(0, s.size, chunk):
        blk = s[lo:lo + chunk]
        nodes = _PHI_NODES
        val = _polar_integral_scaled(blk, n, nodes)
        while True:
            nodes *= 2
            nxt = _polar_integral_scaled(blk, n, nodes)
            change = np.max(np.abs(nxt - val) / np.abs(nxt))
            val = nxt
            if change < _PHI_RTOL or nodes >= _PHI_MAX_NODES:
                break
        out[lo:lo + chunk] = val
    return out.reshape(x.shape) if x.ndim else out[0]


def phi_eta(x, eta: float, n: int):
    """Spherical mean ``int_{S^{n-1}} exp(eta x.w) dw`` at radius ``|x|``.

    For n = 1 this is ``exp(eta x) + exp(-eta x)``. It satisfies
    ``Laplacian(phi) = eta^2 phi``.
    """
    x = _check_phi_args(x, eta)
    return np.exp(eta * x) * phi_eta_scaled(x, eta, n)


def rho_d_eta(t, d: float, eta: float):
    """Temporal factor ``(1+t)^{d/2} exp(-eta t)``."""
    t = np.asarray(t, dtype=float)
    return (1.0 + t) ** (0.5 * d) * np.exp(-eta * t)


def psi_d_eta(x, t, params: TestFunctionParams, n: int):
    """Test function ``rho_d_eta(t) * phi_eta(|x|)``, evaluated without overflow."""
    x = _check_phi_args(x, params.eta)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("psi needs t >= 0")
    return ((1.0 + t) ** (0.5 * params.d) * np.exp(params.eta * (x - t))
            * phi_eta_scaled(x, params.eta, n))


def kernel_K(t, params: TestFunctionParams, model: ModelParams):
    """Coefficient K with ``L* psi = K psi`` (non-positive once eta >= eta_tilde)."""
    t = np.asarray(t, dtype=float)
    d = params.d
    num = 4.0 * model.nu_sq + (d - 2.0 * model.mu) * (d - 2.0)
    return num / (4.0 * (1.0 + t) ** 2) - params.eta * (d - model.mu) / (1.0 + t)


def kernel_K_sup_point(params: TestFunctionParams, model: ModelParams) -> float | None:
    """Critical point in t of K, viewed as a quadratic in ``1/(1+t)``.

    Returns None when the vertex falls outside ``t >= 0``. Sign checks add this
    point to their grid so an interior extremum is never missed.
    """
    d = params.d
    a = (4.0 * model.nu_sq + (d - 2.0 * model.mu) * (d - 2.0)) / 4.0
    b = params.eta * (d - model.mu)
    if a == 0:
        return None
    s = b / (2.0 * a)
    if 0 < s <= 1:
        return 1.0 / s - 1.0
    return None


# ------------------------------------------------------------ Bessel route


def _log_cosh(z):
    z = np.abs(z)
    return z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0)


def _bessel_cutoff(alpha: np.ndarray, t: np.ndarray) -> np.ndarray:
    # smallest Z with t (cosh Z - 1) - alpha Z >= TAIL_LOG, by fixed-point iteration
    z = np.arccosh(1.0 + _TAIL_LOG / t)
    for _ in range(50):
        z_new = np.arccosh(1.0 + (_TAIL_LOG + alpha * z) / t)
        if np.all(np.abs(z_new - z) <= 1e-12 * z_new):
            return z_new
        z = z_new
    return z


def _bessel_rule(alpha, t, zmax, panels):
    xg, wg = gauss_legendre(_BESSEL_NODES)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = (edges[1] - edges[0]) * 0.5
    frac = (edges[:-1, None] + h * (xg[None, :] + 1.0)).ravel()
    w = np.tile(wg * h, panels)
    zeta = zmax[:, None] * frac[None, :]
    logf = -t[:, None] * (np.cosh(zeta) - 1.0) + _log_cosh(alpha[:, None] * zeta)
    return zmax * (np.exp(logf) @ w)


def bessel_K_scaled(alpha, t):
    """``exp(t) K_alpha(t)`` from the integral representation.

    Integrates ``exp(-t cosh z) cosh(alpha z)`` over ``[0, Z]`` with composite
    Gauss-Legendre panels; Z is chosen so the dropped tail is below 1e-20
    relative to the integrand at z = 0. Panels double until the result is
    stable to 1e-13.
    """
    alpha, t = np.broadcast_arrays(np.abs(np.asarray(alpha, dtype=float)),
                                   np.asarray(t, dtype=float))
    if np.any(~(t > 0)):
        raise DomainError("K_alpha(t) needs t > 0")
    shape = t.shape
    a = alpha.ravel().astype(float)
    tt = t.ravel().astype(float)
    zmax = _bessel_cutoff(a, tt)
    panels = _BESSEL_PANELS
    val = _bessel_rule(a, tt, zmax, panels)
    while panels < 1024:
        panels *= 2
        nxt = _bessel_rule(a, tt, zmax, panels)
        done = np.max(np.abs(nxt - val) / np.abs(nxt)) < _BESSEL_RTOL
        val = nxt
        if done:
            break
    return val.reshape(shape) if shape else val[0]


def bessel_K(alpha, t):
    """Modified Bessel function of the second kind, real order."""
    return np.exp(-np.asarray(t, dtype=float)) * bessel_K_scaled(alpha, t)


def xi_eta(t, eta: float, model: ModelParams):
    """Classical temporal factor ``(eta(1+t))^{(mu+1)/2} K_{sqrt(delta)/2}(eta(1+t))``.

    Only defined for a non-negative discriminant.
    """
    if model.delta < 0:
        raise UnsupportedRegimeError(
            f"Bessel test function needs delta >= 0, got delta={model.delta:.6g}")
    s = eta * (1.0 + np.asarray(t, dtype=float))
    return s ** (0.5 * (model.mu + 1.0)) * bessel_K(0.5 * math.sqrt(model.delta), s)


# -------------------------------------------------- functional coefficients


def gamma_coeffs(t, params: TestFunctionParams, model: ModelParams):
    """``(gamma, gamma_1, Gamma)``: the two damping rates and the integrating factor."""
    t = np.asarray(t, dtype=float)
    eta, d, mu = params.eta, params.d, model.mu
    gamma = 2.0 * eta + (mu - d) / (1.0 + t)
    gamma1 = eta + (2.0 * mu - d) / (2.0 * (1.0 + t))
    with np.errstate(over="ignore"):
        big_gamma = np.exp(2.0 * eta * t) * (1.0 + t) ** (mu - d)
    return gamma, gamma1, big_gamma


def lambda_sigma(t, params: TestFunctionParams, model: ModelParams, F, G):
    """Coefficient ``lambda(eta, t)`` and the remainder ``Sigma(t)``."""
    t = np.asarray(t, dtype=float)
    eta, d, mu = params.eta, params.d, model.mu
    s = 1.0 / (1.0 + t)
    lam = (0.5 * eta * eta + (2.0 * d - mu) * eta * s / 4.0 - model.nu_sq * s * s
           + (d - 2.0 * mu) * (3.0 * d - mu - 8.0) * s * s / 8.0)
    _, gamma1, _ = gamma_coeffs(t, params, model)
    sigma = (0.5 * eta - (mu + d) * s / 4.0) * (np.asarray(G) + gamma1 * np.asarray(F))
    return lam, sigma


def lifespan_exponent(model: ModelParams, d: float) -> float:
    """Exponent ``(p-1)/theta`` in ``T_eps <= C eps^{-(p-1)/theta}``."""
    if not (model.mu < d < model.d_upper):
        raise DomainError(
            f"d={d} outside the admissible interval ({model.mu}, {model.d_upper})")
    theta = 1.0 - (model.n + d - 1.0) * (model.p - 1.0) / 2.0
    return (model.p - 1.0) / theta
