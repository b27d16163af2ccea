import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoext.decomposition import balanced_frame
from isoext.demos import bump_state, flat_jet
from isoext.extension import AdaptedShortState
from isoext.fields import Grid, ScalarField, SymTensorField
from isoext.iteration import (EscalationExhausted, Schedule, ScheduleError, SummabilityWarning,
                              cutoff, cutoffs, deficit_split, level_sets, metric_defect, run,
                              tail_ratios, verify_adapted)

SETTINGS = dict(max_examples=40, deadline=None)


@pytest.fixture(scope="module")
def bump_run():
    state = bump_state(resolution=65)
    sched = Schedule.for_state(state, a=0.4, A=16.0)
    return state, run(state, sched, Q_max=2, tol=0.0, strict=False, keep_states=True)


@pytest.mark.parametrize("kwargs", [dict(a=0.6), dict(a=0.0), dict(A=1.0), dict(eps0=-1.0),
                                    dict(alpha=1.0 / 7.0), dict(alpha=0.2)])
def test_invalid_schedules_are_rejected(kwargs):
    base = dict(eps0=1.0, a=0.4, A=16.0)
    base.update(kwargs)
    with pytest.raises(ScheduleError):
        Schedule(**base)


def test_alpha_at_theorem_bound_cites_it():
    with pytest.raises(ScheduleError, match=r"1/\(n\(n\+1\)\+1\)"):
        Schedule(1.0, 0.4, 16.0, alpha=0.15)


def test_alpha_above_summability_ceiling_warns():
    with pytest.warns(SummabilityWarning):
        Schedule(1.0, 0.4, 16.0, alpha=0.13)


def test_alpha_below_ceiling_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Schedule(1.0, 0.4, 16.0, alpha=0.1)


def test_summability_ceiling_approaches_theorem_bound():
    ceilings = [Schedule(1.0, a, 16.0).alpha_ceiling for a in (0.4, 0.49, 0.499999)]
    assert all(c < 1 / 7 for c in ceilings)
    assert np.all(np.diff(ceilings) > 0)
    assert ceilings[-1] == pytest.approx(1 / 7, abs=1e-6)


@given(a=st.floats(0.01, 0.49), A=st.floats(1.5, 100.0), q=st.integers(0, 10))
@settings(**SETTINGS)
def test_schedule_monotonicity(a, A, q):
    s = Schedule(1.0, a, A)
    assert s.eps(q + 1) < s.eps(q)
    assert s.theta(q + 1) > s.theta(q)
    assert s.eps(q) / s.eps(q + 1) == pytest.approx(A ** (2 * a), rel=1e-12)


def test_level_sets_are_nested():
    state = bump_state(resolution=33)
    ls = level_sets(state.rho, Schedule(1.0, 0.4, 4.0))
    for small, big in zip(ls.masks, ls.masks[1:]):
        assert not np.any(small & ~big)
    level = ls.level()
    assert np.all(level[state.rho.values == 0] == -1)
    assert np.all(level[state.rho.values > ls.thresholds[-1]] >= 0)
    for j in range(1, len(ls.masks)):
        at = level == j
        assert np.all(state.rho.values[at] > ls.thresholds[j])
        assert np.all(state.rho.values[at] <= ls.thresholds[j - 1])


def test_cutoff_profile():
    s = np.linspace(0.0, 3.0, 3001)
    chi, dchi = cutoff(s)
    assert np.all(chi[s <= 1.75] == 0.0) and np.all(chi[s >= 2.0] == 1.0)
    assert np.all(np.diff(chi) >= 0)
    fd = np.gradient(chi, s)
    assert np.abs(fd - dchi)[1:-1].max() < 1e-2


def test_cutoffs_nest():
    state = bump_state(resolution=33)
    pair = cutoffs(state.rho, Schedule(0.04, 0.4, 4.0), 0)
    assert np.all(pair.psi.values[pair.phi.values > 0] == 1.0)
    assert np.all(pair.psi.values >= pair.phi.values)


def test_deficit_split_removes_next_scale():
    state = bump_state(resolution=33)
    n = 2
    G = SymTensorField(state.G.grid, 0.01 * np.ones(state.G.values.shape) * np.eye(n),
                       np.zeros(state.G.grid.shape + (2, 2, 2)))
    state = dataclasses.replace(state, G=G)
    sched = Schedule(0.04, 0.4, 4.0)
    rho_t, G_t = deficit_split(state, sched, 0)
    pair = cutoffs(state.rho, sched, 0)
    full = (pair.phi.values == 1) & (pair.psi.values == 1)
    assert full.any()
    lhs = (rho_t.values ** 2)[..., None, None] * (np.eye(n) + G_t.values)
    rhs = (state.rho.values ** 2)[..., None, None] * (np.eye(n) + G.values) - sched.eps(1) * np.eye(n)
    assert np.abs(lhs - rhs)[full].max() < 1e-14
    assert not rho_t.values[pair.phi.values == 0].any()


def test_tail_ratios_of_geometric_series():
    assert np.allclose(tail_ratios([0.5 ** k for k in range(60)])[:10], 0.5, atol=1e-12)


def test_isometric_state_returns_immediately():
    g = Grid((0.0, 0.0), (1.0, 1.0), (17, 17))
    zero = ScalarField(g, np.zeros(g.shape), np.zeros(g.shape + (2,)))
    G = SymTensorField(g, np.zeros(g.shape + (2, 2)), np.zeros(g.shape + (2, 2, 2)))
    metric = SymTensorField(g, np.broadcast_to(np.eye(2), g.shape + (2, 2)).copy())
    state = AdaptedShortState(flat_jet(g), zero, G, 1.0, 0.0, 1.0, metric)
    res = run(state, Schedule(1.0, 0.4, 16.0), Q_max=5, tol=1e-12)
    assert res.report.stop_reason == "tolerance" and not res.report.rows
    assert res.v is state.v


def test_run_records_one_row_per_iterate(bump_run):
    _, res = bump_run
    assert len(res.report.rows) == 2
    assert [r["q"] for r in res.report.rows] == [1, 2]


def test_changes_stay_inside_deficit_support(bump_run):
    state0, res = bump_run
    dead = state0.rho.values == 0
    for later in res.states[1:]:
        assert np.array_equal(later.v.values[dead], state0.v.values[dead])
        assert not later.rho.values[dead].any()


def test_defect_decreases(bump_run):
    _, res = bump_run
    d = res.report.defects()
    # eps_1 still exceeds the whole deficit, so the first iterate is idle
    assert res.report.rows[0]["changed_nodes"] == 0 and d[1] == d[0]
    assert d[2] < 0.5 * d[0]


def test_new_state_satisfies_identity(bump_run):
    _, res = bump_run
    st = res.state
    defect = metric_defect(st.v, st.g)
    recon = (st.rho.values ** 2)[..., None, None] * (np.eye(2) + st.G.values)
    assert np.abs(defect - recon).max() < 1e-8


def test_inflated_G_fails_radius_check():
    state = bump_state(resolution=33)
    frame = balanced_frame(2)
    G = SymTensorField(state.G.grid, np.ones(state.G.values.shape) * 10 * frame.r2 * np.eye(2))
    bad = dataclasses.replace(state, G=G)
    ver = verify_adapted(bad, Schedule.for_state(bad, 0.4, 16.0), 0)
    assert "G_radius" in ver.failed()
    assert ver["G_radius"].worst == pytest.approx(10.0)


def test_strict_mode_exhausts_escalation_on_broken_state():
    state = bump_state(resolution=33)
    G = SymTensorField(state.G.grid, np.ones(state.G.values.shape) * 0.2 * np.eye(2))
    bad = dataclasses.replace(state, G=G)
    with pytest.raises(EscalationExhausted) as info:
        run(bad, Schedule.for_state(bad, 0.4, 16.0), Q_max=2, tol=0.0, max_escalations=1)
    assert info.value.report.escalations == 1
    assert not math.isnan(info.value.report.schedule.A)
