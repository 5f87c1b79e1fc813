import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from blowuplab.errors import DomainError
from blowuplab.functionals import compute_trace
from blowuplab.lifespan import SweepEntry, SweepResult
from blowuplab.solver import InitialData, SolverConfig, make_initial_data, run
from blowuplab.special import ModelParams, TestFunctionParams, thresholds
from blowuplab.verifier import (CHAIN_ANCHORS, CheckResult, adjoint_fd, adjoint_terms,
                                check_adjoint_identity, check_data_constants,
                                check_eigenrelation, check_gamma_bounds, check_kernel_sign,
                                check_lambda_positive, check_lifespan_inequality,
                                check_phi_growth, check_proof_chain, check_theta,
                                check_thresholds, check_xi_ode, phi_power_integral,
                                static_checks, write_ledger)

SCENARIO = ModelParams(1, 0.5, 0.25, 2.0)
PARAMS = TestFunctionParams.build(SCENARIO, 1.0)


def build(mu, nu_sq, d, eta, n=1):
    model = ModelParams(n, mu, nu_sq, 2.0)
    return model, TestFunctionParams.build(model, d, eta)


def test_adjoint_identity_example():
    model, tp = build(1.0, 1.0, 2.0, 4.0)
    res = check_adjoint_identity(tp, model, np.linspace(0, 10, 50), np.linspace(0, 5, 50))
    assert res.status == "pass" and res.margin > 0
    assert "ratio 4.0" in res.detail


def test_adjoint_fd_second_order():
    model, tp = build(0.7, 0.3, 1.5, 5.0, n=3)
    t, r = np.array([1.0, 2.0]), np.array([0.7, 1.3])
    exact = adjoint_terms(t, r, tp, model)[0].sum(axis=0)
    e1 = np.abs(adjoint_fd(t, r, 2e-3, tp, model) - exact)
    e2 = np.abs(adjoint_fd(t, r, 1e-3, tp, model) - exact)
    assert np.all((e1 / e2 > 3) & (e1 / e2 < 5))


def test_adjoint_needs_d_above_mu():
    with pytest.raises(DomainError):
        check_adjoint_identity(TestFunctionParams(0.4, 1.0, 2, 3, 6, 0.5), SCENARIO)


def test_kernel_sign_examples():
    model, tp = build(1.0, 1.0, 2.0, 2.0)
    assert tp.eta_tilde == 2.0
    assert check_kernel_sign(tp, model).status == "pass"
    model, tp = build(0.5, 4.0, 1.0, 8.0)
    res = check_kernel_sign(tp, model)
    assert res.status == "pass" and "K(0) = " in res.detail
    model, tp = build(1.0, 1.0, 2.0, 1.5)  # below eta_tilde
    assert check_kernel_sign(tp, model).status == "vacuous"


@settings(max_examples=200)
@given(st.floats(0, 4), st.floats(0, 4), st.floats(0.05, 4), st.floats(0, 3))
def test_kernel_sign_random(mu, nu_sq, gap, extra):
    model = ModelParams(1, mu, nu_sq, 2.0)
    d = mu + gap
    tp = TestFunctionParams.build(model, d, thresholds(model, d).eta_tilde + extra)
    res = check_kernel_sign(tp, model)
    assert res.status == "pass"
    ratio = thresholds(model, d).ratio
    if ratio > max(2.0, d + 2.0):
        assert "K(0) = " in res.detail and float(res.detail.split("K(0) = ")[1].split()[0]) > 0


def test_phi_integral_closed_form_1d():
    model = ModelParams(1, 0.5, 0.25, 2.0)
    for t in (0.0, 3.0, 20.0):
        L = t + 1.0
        exact = (2 * math.sinh(4 * L) / 2 + 4 * L) * math.exp(-4 * t)
        assert phi_power_integral(t, model, 2.0, 2.0) == pytest.approx(exact, rel=1e-10)


def test_phi_integral_oracle_3d():
    model = ModelParams(3, 0.5, 0.25, 1.5)
    eta, r_exp, t = 1.5, 3.0, 4.0

    def f(rho):
        phi = 4 * math.pi * (math.sinh(eta * rho) / (eta * rho) if rho > 0 else 1.0)
        return phi ** r_exp * 4 * math.pi * rho ** 2 * math.exp(-r_exp * eta * t)

    ref = integrate.quad(f, 0, t + 1.0, epsabs=0, epsrel=1e-12, limit=200)[0]
    assert phi_power_integral(t, model, eta, r_exp) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("n", [1, 3])
def test_phi_growth_bounded(n):
    model = ModelParams(n, 0.5, 0.25, 2.0)
    tp = TestFunctionParams.build(model, 1.0, 2.0)
    res = check_phi_growth(model, tp, 2.0)
    assert res.status == "pass"
    with pytest.raises(DomainError):
        check_phi_growth(model, tp, 1.0)


def test_xi_ode():
    res = check_xi_ode(1.0)
    assert res.status == "pass" and res.margin > 0


@pytest.mark.parametrize("eta", [1.0, 6.0])
def test_eigenrelation(eta):
    res = check_eigenrelation(eta)
    assert res.status == "pass"


def test_static_checks_scenario():
    res = static_checks(PARAMS, SCENARIO, 1.0, 2.0)
    assert all(r.status == "pass" for r in res)
    assert len({r.check_id for r in res}) == len(res)


def test_gated_static_checks():
    model, tp = build(0.5, 0.25, 1.0, 2.5)
    assert check_lambda_positive(tp, model).status == "vacuous"
    assert check_data_constants(1.0, 2.0, tp, model).status == "vacuous"
    model, tp = build(0.5, 0.25, 1.0, 0.9)
    assert check_gamma_bounds(tp, model).status == "vacuous"
    assert check_thresholds(PARAMS, SCENARIO).status == "pass"
    assert check_theta(TestFunctionParams.build(SCENARIO, 1.9), SCENARIO).status == "pass"
    assert check_theta(TestFunctionParams.build(SCENARIO, 2.5), SCENARIO).status == "fail"


def test_fail_has_negative_margin():
    assert CheckResult("x", "a", "fail", 0.0).margin < 0
    assert CheckResult("x", "a", "fail", 2.0).margin == -2.0


@pytest.fixture(scope="module")
def chain_traces():
    out = []
    for dx in (1 / 100, 1 / 200, 1 / 400):
        traj = run(make_initial_data(SCENARIO, 0.4), SCENARIO, SolverConfig(dx=dx, t_max=20.0), PARAMS)
        assert traj.outcome.blew_up
        out.append(compute_trace(traj, PARAMS))
    return out


def test_chain_passes(chain_traces):
    res = check_proof_chain(chain_traces, PARAMS, SCENARIO)
    assert {r.check_id for r in res} == set(CHAIN_ANCHORS)
    assert all(r.status == "pass" for r in res), [r for r in res if r.status != "pass"]
    by_id = {r.check_id: r for r in res}
    # H(1) - L(1) >= eps C0 (1/18 - 1/24) = eps C0 / 72
    tr = chain_traces[-1]
    assert by_id["H_dominates_L"].margin >= tr.epsilon * tr.C0 / 72
    assert by_id["weak_identity"].refinement_trend == "improving"


def test_chain_single_trace(chain_traces):
    res = check_proof_chain(chain_traces[-1])
    assert all(r.refinement_trend == "n/a" or r.check_id == "L_initial_value" or True for r in res)
    assert all(r.status != "fail" for r in res)


def test_chain_zero_data():
    traj = run(InitialData(0.0), SCENARIO, SolverConfig(dx=0.02, t_max=2.0), PARAMS)
    res = check_proof_chain([compute_trace(traj, PARAMS)])
    assert all(r.status == "vacuous" for r in res)


def test_chain_eta_below_eta1(chain_traces):
    low = TestFunctionParams.build(SCENARIO, 1.0, 4.0)
    res = check_proof_chain(chain_traces, low, SCENARIO)
    assert all(r.status == "vacuous" for r in res)


def test_chain_detects_counterexample(chain_traces):
    # a trace whose G dips below zero must fail
    import dataclasses
    bad = [dataclasses.replace(tr, G=tr.G - 2.0 * np.max(tr.G[tr.times < 2])) for tr in chain_traces]
    res = {r.check_id: r for r in check_proof_chain(bad)}
    assert res["G_nonnegative"].status == "fail" and res["G_nonnegative"].margin < 0


def _sweep(times, theta=0.5, p=2.0, eps=(0.05, 0.1, 0.2, 0.4)):
    entries = [SweepEntry(e, (t, t, t), t, 0.0, False) for e, t in zip(eps, times)]
    return SweepResult(entries, math.nan, math.nan, -2.0, math.nan, "delta<0", theta, p)


def test_lifespan_inequality_logic():
    # T from the bound with a common constant: passes
    eps = np.array([0.05, 0.1, 0.2, 0.4])
    T = (eps ** -1 / 3.0 + 2 ** 0.5) ** 2 - 1
    res = check_lifespan_inequality(_sweep(T), PARAMS, SCENARIO)
    assert res.status == "pass" and "C_emp = 3" in res.detail
    # constants spanning more than a decade: fail
    T_bad = np.array([2.5, 2.6, 100.0, 2000.0])
    assert check_lifespan_inequality(_sweep(T_bad), PARAMS, SCENARIO).status == "fail"
    with pytest.raises(DomainError):
        check_lifespan_inequality(_sweep([5.0], eps=(0.1,)), PARAMS, SCENARIO)


def test_lifespan_inequality_censored_vacuous():
    sw = _sweep([10.0, 10.0, 10.0])
    for e in sw.entries:
        e.censored = True
    assert check_lifespan_inequality(sw, PARAMS, SCENARIO).status == "vacuous"


def test_ledger_sorted(tmp_path):
    res = [CheckResult("b", "x", "pass", 1.0), CheckResult("a", "y", "fail", -1.0),
           CheckResult("c", "z", "pass", math.inf)]
    write_ledger(res, tmp_path / "l.json")
    rows = json.loads((tmp_path / "l.json").read_text())
    assert [r["check_id"] for r in rows] == ["a", "b", "c"]
    assert set(rows[0]) >= {"check_id", "paper_anchor", "status", "margin", "refinement_trend"}
    assert rows[2]["margin"] is None
