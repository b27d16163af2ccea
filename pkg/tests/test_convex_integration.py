import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoext.convex_integration import (PHASE_TOLERANCE, PhasePrecisionError, ShortnessError,
                                       StepParameterError, StepParams, add_conformal_deficit,
                                       calibrate, compute_frames, corrugation_phase,
                                       flat_immersion, stage, step, step_detailed)
from isoext.demos import flat_jet, stage_scaling, step_scaling
from isoext.fields import Grid, ImmersionField, ScalarField, SymTensorField, pullback_metric

SETTINGS = dict(max_examples=25, deadline=None)


def square(res=65, side=1.0):
    return Grid((0.0, 0.0), (side, side), (res, res))


def params(lam, eps=0.1, theta=1.0):
    return StepParams(eps=eps, delta=eps, theta=theta, theta_tilde=theta, lam=lam)


def test_params_reject_eps_above_delta():
    with pytest.raises(StepParameterError):
        StepParams(eps=0.5, delta=0.1, theta=1.0, theta_tilde=1.0, lam=10.0)


def test_params_frequency_condition_names_inequality():
    p = StepParams(eps=0.01, delta=1.0, theta=2.0, theta_tilde=2.0, lam=10.0, c0=1.0)
    with pytest.raises(StepParameterError, match="frequency condition"):
        p.check_frequency()


def test_flat_frames():
    u = flat_jet(square(17))
    fr = compute_frames(u, (0.6, 0.8))
    assert np.allclose(fr.xi, [0.6, 0.8, 0.0], atol=1e-15)
    assert np.allclose(np.abs(fr.zeta[..., 2]), 1.0, atol=1e-15)
    assert np.allclose(fr.xi_tilde_norm, 1.0, atol=1e-15)


def test_cylinder_normal_is_radial():
    g = Grid((0.0, 0.0), (2 * math.pi, 1.0), (129, 17))
    x = g.coords()
    u = ImmersionField(g, np.stack([np.cos(x[..., 0]), np.sin(x[..., 0]), x[..., 1]], -1))
    fr = compute_frames(u, (1.0, 0.0), with_gradients=False)
    radial = np.stack([np.cos(x[..., 0]), np.sin(x[..., 0]), 0 * x[..., 0]], -1)
    assert np.allclose(np.abs(np.einsum("...a,...a->...", fr.zeta, radial)), 1.0, atol=1e-3)
    tangential = np.einsum("...ai,...a->...i", u.jacobian(), fr.zeta)
    assert np.abs(tangential).max() <= 2 * g.spacing[0] ** 2


@given(seed=st.integers(0, 2 ** 16), amp=st.floats(0.0, 0.2))
@settings(**SETTINGS)
def test_zeta_is_normal_and_xi_dual_to_nu(seed, amp):
    g = square(17)
    rng = np.random.default_rng(seed)
    u = flat_immersion(g)
    u = ImmersionField(g, u.values + amp * np.sin(g.coords() @ rng.standard_normal((2, 3)) * 3))
    nu = rng.standard_normal(2)
    nu /= np.linalg.norm(nu)
    fr = compute_frames(u, nu, with_gradients=False)
    J = u.jacobian()
    assert np.abs(np.einsum("...ai,...a->...i", J, fr.zeta)).max() <= 10 * g.spacing[0] ** 2
    # J^T xi = nu / |xi_tilde|^2
    lhs = np.einsum("...ai,...a->...i", J, fr.xi) * fr.xi_tilde_norm[..., None] ** 2
    assert np.allclose(lhs, nu, atol=1e-12)


def test_frames_reject_metric_outside_band():
    u = ImmersionField(square(17), 3.0 * flat_immersion(square(17)).values)
    with pytest.raises(ShortnessError):
        compute_frames(u, (1.0, 0.0), gamma=2.0)


def test_constant_amplitude_is_absorbed_exactly():
    g = square(65)
    c = 0.3
    v = step(flat_immersion(g), c, (1.0, 0.0), params(40.0))
    target = np.eye(2) + c * c * np.diag([1.0, 0.0])
    assert np.abs(pullback_metric(v).values - target).max() < 1e-8


def test_zero_amplitude_returns_input():
    u = flat_jet(square(33))
    v = step(u, 0.0, (1.0, 0.0), params(40.0))
    assert np.array_equal(v.values, u.values) and np.array_equal(v.jac, u.jac)


def test_step_is_local():
    g = square(65)
    x = g.coords()
    r = np.hypot(x[..., 0] - 0.5, x[..., 1] - 0.5) / 0.3
    bump = np.where(r < 1, np.exp(1 - 1 / np.maximum(1 - r ** 2, 1e-300)), 0.0)
    u = flat_jet(g)
    v = step(u, 0.2 * bump, (1.0, 1.0), params(40.0))
    out = bump == 0
    assert np.array_equal(v.values[out], u.values[out])
    assert np.array_equal(v.jac[out], u.jac[out])


def test_residual_decays_like_inverse_frequency():
    run = step_scaling(resolution=257, lams=(16.0, 32.0, 64.0))
    assert -1.25 <= run.slope <= -0.75


def test_increment_norms_follow_frequency_powers():
    run = step_scaling(resolution=257, lams=(16.0, 32.0))
    for row in run.rows:
        lam, d0, d1, d2 = row["lam"], row["dv0"], row["dv1"], row["dv2"]
        assert 0.25 <= d0 * lam / d1 <= 4.0
        assert 0.25 <= d2 / (lam * d1) <= 4.0


def test_phase_is_reduced_and_bounded():
    g = square(17)
    t, err = corrugation_phase(g, np.array([1.0, 0.0]), 1e6)
    assert t.min() >= 0 and t.max() < 2 * math.pi
    assert err < PHASE_TOLERANCE


def test_phase_precision_guard():
    u = flat_jet(square(17))
    with pytest.raises(PhasePrecisionError):
        step_detailed(u, 0.1, (1.0, 0.0), params(1e20), terminal=True)


def test_empty_stage_is_identity():
    u = flat_jet(square(17))
    res = stage(u, [], params(1.0), K=4.0)
    assert res.v is u and not res.E.values.any()


def test_single_deficit_stage_matches_step():
    g = square(65)
    u = flat_jet(g)
    a = 0.2 * np.sin(np.pi * g.coords()[..., 0])
    p = params(1.0)
    res = stage(u, [(a, (1.0, 0.0))], p, K=20.0)
    lam = res.diagnostics[0]["lam"]
    v = step(u, a, (1.0, 0.0), StepParams(0.1, 0.1, 1.0, 1.0, lam=lam), terminal=True)
    assert np.array_equal(res.v.values, v.values)
    expected = pullback_metric(v).values - np.eye(2) - (a ** 2)[..., None, None] * np.diag([1, 0])
    assert np.abs(res.E.values - expected).max() < 1e-14


def test_zero_rho_leaves_immersion_unchanged():
    g = square(33)
    u = flat_jet(g)
    res = add_conformal_deficit(u, ScalarField(g, np.zeros(g.shape)),
                                SymTensorField(g, np.zeros(g.shape + (2, 2))), params(1.0, 0.05), 8)
    assert np.array_equal(res.v.values, u.values) and not res.E.values.any()


def test_conformal_stage_error_decays_like_inverse_ratio_and_absorbs():
    run = stage_scaling(resolution=129)
    assert -1.25 <= run.slope <= -0.75
    # the gap rho^2 = 0.04 shrinks to the stage error
    assert max(run.residuals) < 0.04


def test_calibration_is_cached(tmp_path):
    cache = tmp_path / "cal.json"
    first = calibrate(resolution=65, cache_path=cache)
    assert first.c0 > 0 and first.K0 >= 2
    cache.write_text(cache.read_text().replace(str(first.c0), "123.0"))
    assert calibrate(resolution=65, cache_path=cache).c0 == 123.0
