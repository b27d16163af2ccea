import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from isoext.corrugation import (CorrugationDomainError, CorrugationProfile, amplitude,
                                amplitude_array, bessel_j0, bessel_j1, corrugation_table,
                                default_profile)

SETTINGS = dict(max_examples=60, deadline=None)


@pytest.fixture(scope="module")
def profile():
    return default_profile()


@given(x=st.floats(0, 30))
@settings(**SETTINGS)
def test_bessel_functions_match_reference(x):
    assert bessel_j0(x) == pytest.approx(special.j0(x), abs=1e-13)
    assert bessel_j1(x) == pytest.approx(special.j1(x), abs=1e-13)


def test_amplitude_at_zero():
    assert amplitude(0.0) == 0.0


def test_amplitude_plugs_back():
    a = amplitude(0.3)
    assert abs(bessel_j0(a) * math.sqrt(1.09) - 1.0) < 1e-12


def test_amplitude_small_s_asymptote():
    assert amplitude(1e-3) / 1e-3 == pytest.approx(math.sqrt(2.0), abs=1e-4)


def test_amplitude_outside_domain():
    with pytest.raises(CorrugationDomainError):
        amplitude(1.5)


def test_amplitude_is_monotone():
    s = np.linspace(0.0, 1.0, 513)
    assert np.all(np.diff(amplitude_array(s)) > 0)


@given(s=st.floats(0, 1))
@settings(**SETTINGS)
def test_table_amplitude_agrees_with_bisection(profile, s):
    assert float(profile.alpha(s)) == pytest.approx(amplitude(s), abs=1e-12)


def test_zero_amplitude_profile_vanishes(profile):
    t = np.linspace(0, 2 * np.pi, 50)
    g1, g2 = profile.gamma(0.0 * t, t)
    assert not g1.any() and not g2.any()


@given(s=st.floats(0, 1))
@settings(**SETTINGS)
def test_profile_is_periodic(profile, s):
    g1, g2 = profile.gamma(np.array([s, s]), np.array([0.0, 2 * np.pi]))
    assert abs(g1[1] - g1[0]) < 1e-10 and abs(g2[1] - g2[0]) < 1e-10
    assert abs(g1[0]) < 1e-10 and abs(g2[0]) < 1e-10


@given(s=st.floats(0, 1), t=st.floats(-20, 20))
@settings(**SETTINGS)
def test_circle_identity(profile, s, t):
    assert abs(profile.identity_residual(s, t)) < 1e-10


def test_circle_identity_at_reference_point(profile):
    d1, d2 = profile.gamma_t(0.3, np.pi / 2)
    assert abs((1 + d1) ** 2 + d2 ** 2 - 1.09) < 1e-10


def test_period_means_vanish(profile):
    s = np.linspace(0.0, 1.0, 33)
    m1, m2 = profile.period_means(s)
    assert np.abs(m1).max() < 1e-10 and np.abs(m2).max() < 1e-10


def test_first_t_derivative_at_zero(profile):
    s = 0.7
    d1, _ = profile.gamma_t(s, 0.0)
    assert d1 == pytest.approx(math.sqrt(1 + s * s) * math.cos(amplitude(s)) - 1.0, abs=1e-12)


def test_t_derivative_against_finite_difference(profile):
    h = 1e-4
    g_plus, _ = profile.gamma(0.3, 1.0 + h)
    g_minus, _ = profile.gamma(0.3, 1.0 - h)
    d1, _ = profile.gamma_t(0.3, 1.0)
    assert abs((g_plus - g_minus) / (2 * h) - d1) < 1e-6


@pytest.mark.parametrize("t", [0.4, 1.3, 2.9])
def test_s_derivative_against_finite_difference(profile, t):
    h = 1e-5
    for k in (0, 1, 2):
        plus = profile.gamma_partials(0.5 + h, t, k)["t"]
        minus = profile.gamma_partials(0.5 - h, t, k)["t"]
        ds = profile.gamma_s(0.5, t, k)
        for i in range(2):
            assert abs((plus[i] - minus[i]) / (2 * h) - ds[i]) < 1e-6


def test_s_derivative_stays_bounded_near_zero(profile):
    t = np.linspace(0, 2 * np.pi, 257)
    sups = [np.abs(profile.gamma_s(s + 0 * t, t)[1]).max() for s in (1e-3, 1e-2, 1e-1)]
    assert max(sups) < 10.0
    assert max(sups) / min(sups) < 2.0


def test_t_derivative_order_above_two_rejected(profile):
    with pytest.raises(ValueError):
        profile.gamma_partials(0.3, 1.0, 3)


def test_t_derivatives_scale_linearly_in_amplitude(profile):
    s = np.linspace(1e-3, 1.0, 64)[:, None]
    t = np.linspace(0, 2 * np.pi, 256)[None, :]
    consts = []
    for k in (0, 1, 2):
        g1, g2 = profile.gamma_partials(s + 0 * t, t + 0 * s, k)["t"]
        consts.append((np.maximum(np.abs(g1), np.abs(g2)).max(axis=1) / s[:, 0]).max())
    assert all(np.isfinite(consts)) and max(consts) < 10


def test_table_shape_and_domain(profile):
    table = corrugation_table(profile)
    assert table.shape == (64 * 256, 5)
    assert table[:, 0].max() == 1.0
    assert np.abs(table[:, 4]).max() < 1e-9


def test_widened_domain_keeps_identity():
    wide = CorrugationProfile(delta_star=2.0)
    table = corrugation_table(wide, 32, 64)
    assert np.abs(table[:, 4]).max() < 1e-12
    assert float(wide.alpha(2.0)) < 2.404825557695773
