import numpy as np
import pytest
from scipy.linalg import expm, solve

from errors import ConfigurationError, DomainError, ShapeError
from spatial import (Backend, Field, Grid, State, apply_lambda_resolvent, apply_lambda_semigroup,
                     build_operator, fd_laplacian_matrix, forward_transform, fractional_laplacian,
                     heat_semigroup, inverse_transform, norm_E, norm_H, norm_state_E, resolvent,
                     to_eigenbasis)


def test_grid_rejects_single_mode():
    with pytest.raises(ConfigurationError):
        Grid(1)


def test_grid_points_are_cell_centred():
    grid = Grid(4, Backend.FINITE_DIFFERENCE)
    assert grid.h == 0.25
    np.testing.assert_allclose(grid.points, [0.125, 0.375, 0.625, 0.875])


def test_fd_eigenvalues_at_two_modes():
    op = build_operator(Grid(2, Backend.FINITE_DIFFERENCE))
    np.testing.assert_allclose(op.eigenvalues, [0.0, 8.0], atol=1e-12)


def test_spectral_eigenvalues():
    op = build_operator(Grid(3, Backend.SPECTRAL_GALERKIN))
    np.testing.assert_allclose(op.eigenvalues, [0.0, np.pi ** 2, 4 * np.pi ** 2])


@pytest.mark.parametrize('backend', list(Backend))
def test_eigenvalues_start_at_zero_and_increase(backend):
    op = build_operator(Grid(64, backend))
    assert op.eigenvalues[0] == 0.0
    assert np.all(np.diff(op.eigenvalues) > 0)
    assert not op.eigenvalues.flags.writeable


def test_fd_matrix_is_diagonalized_by_transform(fd_op):
    A = fd_laplacian_matrix(fd_op.grid)
    np.testing.assert_allclose(A.sum(axis=1), 0.0, atol=1e-8)
    spectrum = np.sort(-np.linalg.eigvalsh(A))
    np.testing.assert_allclose(spectrum, fd_op.eigenvalues, rtol=1e-10, atol=1e-8)


def test_transform_roundtrip_and_isometry(rng):
    values = rng.standard_normal((10, 64))
    coeffs = forward_transform(values)
    np.testing.assert_allclose(inverse_transform(coeffs), values, atol=1e-12)
    np.testing.assert_allclose(norm_H(Field.in_eigenbasis(coeffs)), norm_H(Field.on_grid(values)), rtol=1e-12)


def test_norms_of_simple_fields(spectral_op):
    grid = spectral_op.grid
    assert norm_H(Field.on_grid(np.ones(grid.n_modes))) == pytest.approx(1.0)
    e1 = Field.on_grid(np.sqrt(2.0) * np.cos(np.pi * grid.points))
    assert norm_H(e1) == pytest.approx(1.0, abs=1e-12)
    u = Field.on_grid(np.linspace(-2.0, 1.0, grid.n_modes))
    x = State(u, Field.on_grid(np.zeros(grid.n_modes)))
    assert norm_state_E(x) == norm_E(u) == 2.0


@pytest.mark.parametrize('backend', list(Backend))
def test_constant_field_is_invariant(backend):
    op = build_operator(Grid(32, backend))
    f = Field.on_grid(np.full(32, 3.5))
    np.testing.assert_allclose(heat_semigroup(op, 0.3, f).values, 3.5, atol=1e-12)
    np.testing.assert_allclose(resolvent(op, 0.3, f).values, 3.5, atol=1e-12)


def test_first_eigenfunction_decays(spectral_op):
    e1 = np.sqrt(2.0) * np.cos(np.pi * spectral_op.grid.points)
    out = heat_semigroup(spectral_op, 1.0, Field.on_grid(e1))
    np.testing.assert_allclose(out.values, np.exp(-np.pi ** 2) * e1, atol=1e-12)
    out = resolvent(spectral_op, 1.0, Field.on_grid(e1))
    np.testing.assert_allclose(out.values, e1 / (1.0 + np.pi ** 2), atol=1e-12)


def test_semigroup_matches_dense_exponential(fd_op, rng):
    f = rng.standard_normal(64)
    A = fd_laplacian_matrix(fd_op.grid)
    expected = expm(0.1 * A) @ f
    out = heat_semigroup(fd_op, 0.1, Field.on_grid(f))
    np.testing.assert_allclose(out.values, expected, atol=1e-10)


def test_resolvent_matches_direct_solve(fd_op, rng):
    f = rng.standard_normal(64)
    A = fd_laplacian_matrix(fd_op.grid)
    expected = solve(np.eye(64) - 0.01 * A, f)
    out = resolvent(fd_op, 0.01, Field.on_grid(f))
    np.testing.assert_allclose(out.values, expected, atol=1e-10)


def test_semigroup_law(spectral_op, rng):
    f = Field.on_grid(rng.standard_normal(64))
    twice = heat_semigroup(spectral_op, 0.02, heat_semigroup(spectral_op, 0.03, f))
    once = heat_semigroup(spectral_op, 0.05, f)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-12)


def test_zero_time_returns_input(spectral_op, rng):
    f = Field.on_grid(rng.standard_normal(64))
    assert heat_semigroup(spectral_op, 0.0, f) is f


def test_representation_is_preserved(spectral_op, rng):
    f = to_eigenbasis(Field.on_grid(rng.standard_normal(64)))
    out = heat_semigroup(spectral_op, 0.1, f)
    assert not out.is_grid
    np.testing.assert_allclose(out.values, np.exp(-0.1 * spectral_op.eigenvalues) * f.values)


@pytest.mark.parametrize('backend', list(Backend))
@pytest.mark.parametrize('t', [1e-3, 1e-2, 1e-1])
def test_non_expansive(backend, t, rng):
    op = build_operator(Grid(64, backend))
    f = Field.on_grid(rng.uniform(-5.0, 5.0, size=(1000, 64)))
    for g in (heat_semigroup(op, t, f), resolvent(op, t, f)):
        assert np.all(norm_H(g) <= norm_H(f) + 1e-12)
        assert np.all(norm_E(g) <= norm_E(f) + 1e-12)


@pytest.mark.parametrize('alpha', [0.25, 0.5])
@pytest.mark.parametrize('t', [0.01, 0.1, 1.0])
def test_smoothing_bound(spectral_op, rng, alpha, t):
    f = Field.on_grid(rng.standard_normal((200, 64)))
    smoothed = fractional_laplacian(spectral_op, alpha, heat_semigroup(spectral_op, t, f))
    c_alpha = alpha ** alpha * np.exp(-alpha)
    assert np.all(norm_H(smoothed) <= c_alpha * t ** -alpha * norm_H(f) + 1e-12)


def test_temporal_regularity_of_semigroup(spectral_op, rng):
    mu, nu, t1, t2 = 0.3, 0.2, 0.01, 0.02
    f = Field.on_grid(rng.standard_normal((200, 64)))
    diff = heat_semigroup(spectral_op, t2, f).values - heat_semigroup(spectral_op, t1, f).values
    bound = (2 ** (mu + nu) * np.sqrt(mu ** (2 * mu) * np.exp(-2 * mu))
             * (t2 - t1) ** (mu + nu) * t1 ** -mu * norm_H(fractional_laplacian(spectral_op, nu, f)))
    assert np.all(norm_H(Field.on_grid(diff)) <= bound + 1e-12)


def test_fractional_laplacian_matches_matrix(fd_op, rng):
    f = rng.standard_normal(64)
    A = fd_laplacian_matrix(fd_op.grid)
    out = fractional_laplacian(fd_op, 1.0, Field.on_grid(f))
    np.testing.assert_allclose(out.values, -A @ f, rtol=1e-9, atol=1e-7)
    np.testing.assert_allclose(fractional_laplacian(fd_op, 0.0, Field.on_grid(f)).values, f, atol=1e-12)


def test_lambda_operators_leave_v_alone(spectral_op, rng):
    v = Field.on_grid(rng.standard_normal(64))
    x = State(Field.on_grid(np.zeros(64)), v)
    for y in (apply_lambda_semigroup(spectral_op, 0.2, x), apply_lambda_resolvent(spectral_op, 0.2, x)):
        np.testing.assert_allclose(y.u.values, 0.0, atol=1e-14)
        assert y.v is v
    z = State(Field.on_grid(rng.standard_normal(64)), v)
    assert apply_lambda_semigroup(spectral_op, 0.0, z).u is z.u


def test_domain_and_shape_errors(spectral_op):
    f = Field.on_grid(np.zeros(64))
    with pytest.raises(DomainError):
        heat_semigroup(spectral_op, -0.1, f)
    with pytest.raises(DomainError):
        resolvent(spectral_op, 0.0, f)
    with pytest.raises(DomainError):
        fractional_laplacian(spectral_op, -0.5, f)
    with pytest.raises(ShapeError):
        heat_semigroup(spectral_op, 0.1, Field.on_grid(np.zeros(32)))
    with pytest.raises(ShapeError):
        State(Field.on_grid(np.zeros(64)), Field.on_grid(np.zeros(32)))
