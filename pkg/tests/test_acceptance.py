"""Acceptance criteria 1 to 8, one test each, at the stated tolerances."""
import time

import numpy as np
import pytest

from isoext.convex_integration import StepParams, add_conformal_deficit
from isoext.corrugation import CorrugationProfile, corrugation_table
from isoext.decomposition import balanced_frame, decompose_near_identity, n_star
from isoext.demos import bump_state, flat_jet, stage_scaling, step_scaling
from isoext.extension import (ConditionError, check_condition, extension_sweep, short_ansatz,
                              straight_line_data, strip_data)
from isoext.fields import SymTensorField, operator_norm, pointwise_norm
from isoext.io import ConfigError, RunConfig
from isoext.iteration import EscalationExhausted, Schedule, ScheduleError, run, tail_ratios


@pytest.fixture(scope="module")
def strip_extension():
    data = strip_data(radius=1.0)
    return data, extension_sweep(data, [16.0, 32.0, 64.0, 128.0], r_max=1.0)


def test_criterion_1_corrugation_identity():
    start = time.perf_counter()
    profile = CorrugationProfile()
    table = corrugation_table(profile, 64, 256)
    s = np.linspace(0.0, 1.0, 64)
    g_start = profile.gamma(s, 0.0 * s)
    g_end = profile.gamma(s, 0.0 * s + 2 * np.pi)
    gap = max(np.abs(g_end[i] - g_start[i]).max() for i in range(2))
    elapsed = time.perf_counter() - start
    assert np.abs(table[:, 4]).max() < 1e-9
    assert gap < 1e-9
    assert elapsed < 1.0


def _sym(B):
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def test_criterion_2_decomposition_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for n in (2, 3):
        frame = balanced_frame(n)
        B = _sym(rng.standard_normal((1000, n, n)))
        B *= (rng.uniform(0, frame.r0, 1000) / operator_norm(B))[:, None, None]
        P = np.eye(n) + B
        a = decompose_near_identity(P, frame)
        rec = frame.reconstruct(a ** 2)
        err = np.linalg.norm(rec - P, axis=(-2, -1)) / np.linalg.norm(P, axis=(-2, -1))
        assert err.max() <= 1e-10
        X, Y = _sym(rng.standard_normal((2, 1000, n, n)))
        t = rng.uniform(-3, 3, (1000, 1))
        c = frame.coefficients
        assert np.abs(c(X + Y) - c(X) - c(Y)).max() <= 1e-13
        assert np.abs(c(t[..., None] * X) - t * c(X)).max() <= 1e-13
    assert time.perf_counter() - start < 1.0


def test_criterion_3_step_residual_scaling():
    start = time.perf_counter()
    result = step_scaling(resolution=1025, lams=(64.0, 128.0, 256.0), amplitude=0.2)
    assert -1.25 <= result.slope <= -0.75
    assert time.perf_counter() - start < 60.0


def test_criterion_4_stage_scaling_and_locality():
    result = stage_scaling(resolution=257, Ks=(8.0, 16.0, 32.0))
    assert -1.25 <= result.slope <= -0.75
    state = bump_state(resolution=129)
    u = flat_jet(state.v.grid)
    G = SymTensorField(u.grid, np.zeros(u.grid.shape + (2, 2)), np.zeros(u.grid.shape + (2, 2, 2)))
    p = StepParams(eps=0.16, delta=0.16, theta=1.0, theta_tilde=1.0, lam=1.0)
    res = add_conformal_deficit(u, state.rho, G, p, K=8.0)
    outside = state.rho.values == 0
    assert outside.any()
    assert not res.E.values[outside].any()
    assert np.array_equal(res.v.values[outside], u.values[outside])
    assert np.array_equal(res.v.jac[outside], u.jac[outside])


def test_criterion_5_extension(strip_extension):
    data, ext = strip_extension
    st = ext.state
    grid = st.v.grid
    assert np.abs(st.v.values[:, 0] - data.f).max() <= np.finfo(float).eps
    active = st.rho.values > 0
    J = st.v.jacobian()
    defect = st.g.values - np.swapaxes(J, -1, -2) @ J
    rho = st.rho.values[active]
    recon = (rho ** 2)[:, None, None] * (np.eye(2) + st.G.values[active])
    assert np.abs(defect[active] - recon).max() <= 1e-8
    slack = 1 + 1e-12
    assert operator_norm(st.G.values[active]).max() <= st.r * slack
    assert (pointwise_norm(st.v.hessian(), grid)[active] * rho ** 2).max() <= st.M * slack
    assert (pointwise_norm(st.rho.gradient(), grid)[active] * rho).max() <= st.M * slack
    assert (pointwise_norm(st.G.gradient(), grid)[active] * rho ** 3).max() <= st.M * slack
    xn = grid.coords()[..., -1][active]
    ratio = rho ** 2 / xn
    assert ratio.max() / ratio.min() <= ext.layers.C ** 2


def test_criterion_6_iteration_convergence(strip_extension):
    _, ext = strip_extension
    a, A = 0.4, 16.0
    sched = Schedule.for_state(ext.state, a=a, A=A)
    start = time.perf_counter()
    try:
        result = run(ext.state, sched, Q_max=4, tol=0.0)
    except EscalationExhausted as err:
        pytest.fail(f"no convergent run: {err}")
    report = result.report
    s = report.schedule
    assert len(report.rows) == 4
    d = report.defects()
    expected = s.A ** (-2 * a)
    for prev, cur in zip(d[1:], d[2:]):
        assert expected / 2 <= cur / prev <= 2 * expected
    ceiling = a / (n_star(2) + a)
    assert max(tail_ratios(report.holder_increments(0.9 * ceiling))) < 0.9
    assert max(tail_ratios(report.holder_increments(1.5 * ceiling))) >= 0.9
    assert report.distance <= report.distance_bound
    assert time.perf_counter() - start < 600.0


def test_criterion_7_exponent_budget():
    ceilings = [Schedule(1.0, a, 16.0, n=2).alpha_ceiling for a in (0.4, 0.49, 0.499, 0.4999999)]
    assert np.all(np.diff(ceilings) > 0)
    assert abs(ceilings[-1] - 1 / 7) < 1e-6
    for alpha in (1 / 7, 0.2):
        with pytest.raises(ConfigError, match=r"1/\(n\(n\+1\)\+1\) = 1/7"):
            RunConfig.from_dict({"schedule": {"alpha": alpha}})
        with pytest.raises(ScheduleError, match=r"1/\(n\(n\+1\)\+1\) = 1/7"):
            Schedule(1.0, 0.4, 16.0, n=2, alpha=alpha)


def test_criterion_8_straight_line_rejected():
    data = straight_line_data()
    assert check_condition(data).margin <= 0
    with pytest.raises(ConditionError):
        short_ansatz(data)
