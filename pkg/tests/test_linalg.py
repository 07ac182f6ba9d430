import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emcov.linalg import (
    NotHermitianError,
    NotPositiveDefiniteError,
    as_hermitian,
    exchange_matrix,
    fb_average,
    hermitian_evd,
    solve_hpd,
    spectral_radius,
)
from conftest import random_hpd


def test_as_hermitian_symmetrizes_roundoff():
    m = np.array([[1.0, 2 + 1e-15j], [2, 3]])
    h = as_hermitian(m)
    assert np.array_equal(h, h.conj().T)


def test_as_hermitian_rejects_asymmetric():
    with pytest.raises(NotHermitianError):
        as_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_as_hermitian_rejects_non_square():
    with pytest.raises(ValueError):
        as_hermitian(np.ones((2, 3)))


def test_evd_descending_and_reconstructs(rng):
    m = random_hpd(rng, 6, cond=50)
    evd = hermitian_evd(m)
    assert np.all(np.diff(evd.eigenvalues) <= 0)
    np.testing.assert_allclose(evd.reconstruct(), m, atol=1e-12)


def test_evd_of_diagonal():
    evd = hermitian_evd(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(evd.eigenvalues, [3, 2, 1])


def test_solve_hpd_matches_dense_solve(rng):
    m = random_hpd(rng, 5)
    b = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    np.testing.assert_allclose(solve_hpd(m, b), np.linalg.solve(m, b), rtol=1e-12)


def test_solve_hpd_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError, match="eigenvalue"):
        solve_hpd(np.diag([1.0, -1.0]), np.ones(2))


def test_spectral_radius():
    assert spectral_radius(np.array([[0.0, 2.0], [-2.0, 0.0]])) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))


def test_exchange_matrix_is_involution():
    j = exchange_matrix(5)
    assert np.array_equal(j @ j, np.eye(5))
    assert j[0, 4] == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_fb_average_is_centro_hermitian_and_idempotent(n, seed):
    m = random_hpd(np.random.default_rng(seed), n)
    j = exchange_matrix(n)
    f = fb_average(m)
    np.testing.assert_allclose(f, j @ f.conj() @ j, atol=1e-13)
    np.testing.assert_allclose(fb_average(f), f, atol=1e-13)
    np.testing.assert_allclose(f, 0.5 * (m + j @ m.conj() @ j), atol=1e-13)
