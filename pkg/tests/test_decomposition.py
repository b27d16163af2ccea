import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isoext.decomposition import (MarginViolationError, OutOfRadiusError, balanced_frame,
                                  decompose_field, decompose_global, decompose_near_identity,
                                  n_star, standard_frame)
from isoext.fields import Grid, ScalarField, SymTensorField

SETTINGS = dict(max_examples=60, deadline=None)


def sym(B):
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def random_near_identity(rng, n, r0, count):
    B = sym(rng.standard_normal((count, n, n)))
    B *= (rng.uniform(0, r0, count) / np.abs(np.linalg.eigvalsh(B)).max(axis=-1))[:, None, None]
    return np.eye(n) + B


@pytest.mark.parametrize("n", [2, 3, 4])
def test_frames_have_n_star_unit_directions(n):
    for frame in (standard_frame(n), balanced_frame(n)):
        assert frame.size == n_star(n)
        assert np.allclose(np.linalg.norm(frame.directions, axis=1), 1.0, atol=1e-14)
        proj = np.einsum("ki,kj->kij", frame.directions, frame.directions).reshape(frame.size, -1)
        assert np.linalg.matrix_rank(proj) == n_star(n)


def test_standard_frame_directions_for_n2():
    d = standard_frame(2).directions
    assert np.allclose(d, [[1, 0], [0, 1], [2 ** -0.5, 2 ** -0.5]])


def test_standard_frame_coefficients_at_identity():
    fr = standard_frame(2)
    assert np.allclose(decompose_near_identity(np.eye(2), fr) ** 2, [1, 1, 0], atol=1e-15)
    P = np.eye(2) + 0.1 * np.outer([1, 0], [1, 0])
    assert np.allclose(decompose_near_identity(P, fr) ** 2, [1.1, 1, 0], atol=1e-15)


@pytest.mark.parametrize("n", [2, 3])
def test_balanced_radii(n):
    fr = balanced_frame(n)
    assert 0 < fr.r0 < 1
    assert fr.r1 <= fr.r2 / 5 <= fr.r0 / 25 + 1e-15


@pytest.mark.parametrize("n", [2, 3])
def test_boundary_of_radius_ball_keeps_coefficients_nonnegative(n):
    fr = balanced_frame(n)
    rng = np.random.default_rng(3)
    B = sym(rng.standard_normal((2000, n, n)))
    B *= (fr.r0 / np.abs(np.linalg.eigvalsh(B)).max(axis=-1))[:, None, None]
    assert fr.coefficients(np.eye(n) + B).min() >= 0


@pytest.mark.parametrize("n", [2, 3])
def test_reconstruction_within_radius(n):
    fr = balanced_frame(n)
    P = random_near_identity(np.random.default_rng(n), n, fr.r0, 1000)
    a = decompose_near_identity(P, fr)
    rec = fr.reconstruct(a ** 2)
    err = np.linalg.norm(rec - P, axis=(-2, -1)) / np.linalg.norm(P, axis=(-2, -1))
    assert err.max() <= 1e-10
    assert a.min() >= 0


matrices = arrays(np.float64, (2, 2), elements=st.floats(-2, 2))


@given(A=matrices, B=matrices, t=st.floats(-3, 3))
@settings(**SETTINGS)
def test_coefficients_are_linear(A, B, t):
    fr = balanced_frame(2)
    A, B = sym(A), sym(B)
    c = fr.coefficients
    assert np.allclose(c(A + B), c(A) + c(B), rtol=0, atol=1e-13)
    assert np.allclose(c(t * A), t * c(A), rtol=0, atol=1e-13)


def test_out_of_radius_reports_coefficients():
    with pytest.raises(OutOfRadiusError):
        decompose_near_identity(np.diag([1.0, -0.5]), balanced_frame(2))


def test_field_decomposition_reconstructs():
    g = Grid((0.0, 0.0), (1.0, 1.0), (9, 9))
    x = g.coords()
    P = np.eye(2) + 0.1 * np.sin(3 * x[..., :1, None]) * np.array([[1.0, 0.5], [0.5, -1.0]])
    dec = decompose_field(SymTensorField(g, P), balanced_frame(2))
    assert np.abs(dec.reconstruct() - P).max() < 1e-13


def _grid():
    return Grid((0.0, 0.0), (1.0, 1.0), (17, 17))


def test_global_decomposition_of_scaled_identity():
    g, tau = _grid(), 0.2
    rho = ScalarField(g, 0.5 + g.coords()[..., 0])
    S = SymTensorField(g, (rho.values ** 2 * (1 + tau))[..., None, None] * np.eye(2))
    dec = decompose_global(S, rho, tau, balanced_frame(2))
    assert dec.count == 3
    b2 = np.stack([c.values for c in dec.coefficients], -1) ** 2
    assert np.allclose(b2, decompose_near_identity(np.eye(2), balanced_frame(2)) ** 2, atol=1e-14)


def test_global_decomposition_of_anisotropic_deficit():
    g, tau = _grid(), 0.1
    rho = ScalarField(g, np.full(g.shape, 0.3))
    S = SymTensorField(g, 0.09 * np.diag([1.2 + tau, 1.0 + tau]) * np.ones(g.shape + (1, 1)))
    dec = decompose_global(S, rho, tau)
    assert np.abs(dec.reconstruct() - np.diag([1.2, 1.0])).max() < 1e-8


def test_global_decomposition_beyond_radius_uses_covering():
    g, tau = _grid(), 0.1
    x = g.coords()
    rho = ScalarField(g, np.full(g.shape, 1.0))
    Q = np.zeros(g.shape + (2, 2))
    Q[..., 0, 0] = 1.0 + 3.0 * x[..., 0]
    Q[..., 1, 1] = 1.0
    Q[..., 0, 1] = Q[..., 1, 0] = 0.3 * x[..., 1]
    S = SymTensorField(g, Q + tau * np.eye(2))
    dec = decompose_global(S, rho, tau)
    assert dec.count > 3
    assert np.abs(dec.reconstruct() - Q).max() < 1e-8


def test_global_decomposition_vanishes_where_rho_does():
    g, tau = _grid(), 0.1
    x = g.coords()[..., 0]
    rho = ScalarField(g, np.where(x < 0.5, 0.0, x))
    S = SymTensorField(g, ((rho.values ** 2) * 1.5)[..., None, None] * np.eye(2))
    dec = decompose_global(S, rho, tau)
    for c in dec.coefficients:
        assert not c.values[x < 0.5].any()


def test_global_margin_violation_names_node():
    g = _grid()
    rho = ScalarField(g, np.ones(g.shape))
    S = SymTensorField(g, np.ones(g.shape + (1, 1)) * np.diag([1.0, 0.05]))
    with pytest.raises(MarginViolationError) as info:
        decompose_global(S, rho, 0.1)
    assert info.value.node == (0, 0)
