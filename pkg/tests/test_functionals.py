import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from blowuplab.functionals import (TRACE_COLUMNS, _radial_quadrature, check_lower_bounds,
                                   compute_trace, data_constants, holder_ratio, holder_value,
                                   sample_snapshots, write_trace_csv)
from blowuplab.solver import InitialData, SolverConfig, make_initial_data, run
from blowuplab.special import ModelParams, TestFunctionParams, phi_eta

SCENARIO = ModelParams(1, 0.5, 0.25, 2.0)
PARAMS = TestFunctionParams.build(SCENARIO, 1.0)


@pytest.fixture(scope="module")
def short_traces():
    """Scenario runs on [0, 4] at three grids."""
    out = []
    for dx in (1 / 100, 1 / 200, 1 / 400):
        traj = run(make_initial_data(SCENARIO, 0.1), SCENARIO, SolverConfig(dx=dx, t_max=4.0), PARAMS)
        out.append((traj, compute_trace(traj, PARAMS)))
    return out


def test_data_constants_oracle():
    model = ModelParams(1, 0.5, 0.25, 2.0)
    tp = TestFunctionParams.build(model, 1.0, 4.0)
    c0, c1 = data_constants(InitialData(1.0), tp, model)
    ref = 2 * integrate.quad(lambda x: (1 - x * x) ** 3 * (math.exp(4 * x) + math.exp(-4 * x)),
                             -1, 1, epsabs=0, epsrel=1e-12)[0]
    assert c0 == pytest.approx(ref, rel=1e-10)
    int_f = ref / 2
    assert c1 - c0 == pytest.approx((4 + (2 * 0.5 - 1) / 2 - 1) * int_f, rel=1e-10)
    assert c1 >= c0 > 0


def test_data_constants_g_zero():
    tp = TestFunctionParams.build(SCENARIO, 1.0)
    c0, _ = data_constants(InitialData(1.0, amplitude_g=0.0), tp, SCENARIO)
    c0_full, _ = data_constants(InitialData(1.0), tp, SCENARIO)
    assert c0 == pytest.approx(c0_full / 2, rel=1e-13)


@pytest.mark.parametrize("n", [2, 3])
def test_data_quadrature_converged(n):
    model = ModelParams(n, 0.5, 0.25, 1.5)
    data = InitialData(1.0)
    f = lambda r: data.f(r) * phi_eta(r, 3.0, n)  # noqa: E731
    a = _radial_quadrature(f, 1.0, n)
    b = _radial_quadrature(f, 1.0, n, panels=32)
    assert abs(a - b) <= 1e-8 * abs(b)
    assert model.n == n


@given(st.floats(0.3, 8), st.integers(1, 3))
def test_data_constants_order(eta_extra, n):
    model = ModelParams(n, 0.5, 0.25, 1.5)
    tp = TestFunctionParams.build(model, 1.0, 3.0 + eta_extra)  # eta >= d + 2
    c0, c1 = data_constants(InitialData(1.0), tp, model)
    assert c1 >= c0 > 0


def test_trace_invariants(short_traces):
    _, tr = short_traces[-1]
    n = tr.times.size
    for name in ("F", "G", "NL", "NL_cum", "holder_ratio", "weak_residual", "sup_u", "sup_ut"):
        assert getattr(tr, name).size == n
    assert np.all(np.diff(tr.times) > 0)
    assert np.all(tr.NL >= 0)
    late = tr.after(1.0)
    assert np.all(np.diff(tr.NL_cum[late]) >= 0)
    assert np.all(np.isnan(tr.NL_cum[~late]))


def test_F0_matches_quadrature(short_traces):
    _, tr = short_traces[-1]
    int_f = _radial_quadrature(lambda r: InitialData(1.0).f(r) * phi_eta(r, PARAMS.eta, 1), 1.0, 1)
    assert tr.F[0] == pytest.approx(0.1 * int_f, rel=1e-4)
    assert tr.F[0] > 0


def test_L_at_one(short_traces):
    _, tr = short_traces[-1]
    late = tr.after(1.0)
    assert tr.L[late][0] == tr.C0 * tr.epsilon / 24.0
    assert np.all(np.diff(tr.L[late]) >= 0)
    np.testing.assert_allclose(tr.H, tr.G - tr.L)


def test_weak_residual_decays(short_traces):
    res = [np.max(np.abs(tr.weak_residual)) for _, tr in short_traces]
    assert 3.0 <= res[0] / res[1] <= 5.0
    assert 3.0 <= res[1] / res[2] <= 5.0


def test_velocity_identity(short_traces):
    errs = []
    for _, tr in short_traces:
        a = PARAMS.eta - PARAMS.d / (2 * (1 + tr.times))
        errs.append(np.max(np.abs(tr.G - tr.dFdt - a * tr.F)[1:-1]))
    assert errs[-1] < errs[0] / 10


def test_snapshot_path_matches_samples(short_traces):
    traj, tr = short_traces[0]
    snap = sample_snapshots(traj, PARAMS)
    idx = [int(np.argmin(np.abs(tr.times - t))) for t in snap["t"]]
    np.testing.assert_allclose(snap["F"], tr.F[idx], rtol=1e-9)
    np.testing.assert_allclose(snap["NL"], tr.NL[idx], rtol=1e-9)
    other = TestFunctionParams.build(SCENARIO, 1.0, 7.0)
    tr_other = compute_trace(traj, other)
    assert tr_other.times.size == len(traj.snapshots)


def test_zero_data_trace():
    traj = run(InitialData(0.0), SCENARIO, SolverConfig(dx=0.02, t_max=2.0), PARAMS)
    tr = compute_trace(traj, PARAMS)
    assert not np.any(tr.F) and not np.any(tr.G) and not np.any(tr.NL)
    assert np.all(tr.L[tr.after(1.0)] == 0.0)
    rep = check_lower_bounds(tr, PARAMS, SCENARIO)
    assert all(r.status == "vacuous" for r in rep.results)


def test_no_sample_at_one():
    traj = run(make_initial_data(SCENARIO, 0.1), SCENARIO, SolverConfig(dx=0.02, t_max=0.5), PARAMS)
    tr = compute_trace(traj, PARAMS)
    assert tr.L is None and tr.H is None and not tr.has_L


def test_lower_bounds_hold_and_scale_with_epsilon():
    margins = {}
    for eps in (0.05, 0.1, 0.2):
        traj = run(make_initial_data(SCENARIO, eps), SCENARIO, SolverConfig(dx=0.01, t_max=3.0), PARAMS)
        rep = check_lower_bounds(compute_trace(traj, PARAMS), PARAMS, SCENARIO)
        assert rep.all_hold
        assert all(r.margin > 0 for r in rep.results)
        margins[eps] = {r.name: r.margin for r in rep.results}
    for name in margins[0.1]:
        assert margins[0.1][name] / margins[0.05][name] == pytest.approx(2.0, rel=0.05)
        assert margins[0.2][name] / margins[0.1][name] == pytest.approx(2.0, rel=0.05)


def test_lower_bounds_gated_by_eta(short_traces):
    traj, _ = short_traces[0]
    low = TestFunctionParams.build(SCENARIO, 1.0, 2.5)  # below eta_0 = 3
    rep = check_lower_bounds(compute_trace(traj, low), low, SCENARIO)
    assert all(r.status == "not_applicable" for r in rep.results)


def test_holder_ratio_at_least_one(short_traces):
    _, tr = short_traces[-1]
    ratio = holder_ratio(tr)
    assert np.nanmin(ratio) >= 1 - 1e-6
    np.testing.assert_array_equal(ratio, tr.holder_ratio)


@given(st.floats(1e-3, 1e3), st.floats(1.1, 4), st.floats(1e-3, 1e3))
def test_holder_equality_case(c, p, mass):
    assert holder_value(c ** p * mass, mass, c * mass, p) == pytest.approx(1.0, rel=1e-12)


@given(st.floats(1e-2, 1e2))
def test_holder_scale_invariant(c):
    NL, mass, G, p = np.array([2.0, 5.0]), np.array([3.0, 4.0]), np.array([1.5, 2.5]), 1.7
    np.testing.assert_allclose(holder_value(c ** p * NL, mass, c * G, p),
                               holder_value(NL, mass, G, p), rtol=1e-12)


def test_holder_skips_nonpositive_G():
    assert np.isnan(holder_value(1.0, 1.0, -1.0, 2.0))


def test_trace_csv(tmp_path, short_traces):
    _, tr = short_traces[0]
    path = tmp_path / "a" / "trace.csv"
    write_trace_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == tr.times.size + 1
    no_l = dataclasses.replace(tr, L=None, H=None)
    write_trace_csv(no_l, path)
    assert path.read_text().splitlines()[-1].split(",")[5] == "nan"
