import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqgrate.errors import NotPositiveDefinite
from lqgrate.linalg import (
    cholesky,
    eig_sym,
    is_spd,
    logdet_spd,
    psd_rank,
    spd_inv,
    spectral_radius,
    sym,
)


def random_spd(rng, n):
    X = rng.standard_normal((n, n))
    return X @ X.T + n * np.eye(n)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_jacobi_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    M = sym(rng.standard_normal((n, n)))
    lam, U = eig_sym(M)
    assert np.all(np.diff(lam) <= 1e-12)
    np.testing.assert_allclose(lam, np.sort(np.linalg.eigvalsh(M))[::-1], atol=1e-12 * max(1, np.abs(lam).max()))
    np.testing.assert_allclose(U @ np.diag(lam) @ U.T, M, atol=1e-12)
    np.testing.assert_allclose(U.T @ U, np.eye(n), atol=1e-13)


def test_rank_of_projector():
    v = np.array([[1.0], [2.0], [-1.0]])
    assert psd_rank(v @ v.T) == 1
    assert psd_rank(np.zeros((3, 3))) == 0
    assert psd_rank(np.diag([1.0, 1e-12, 0.5])) == 2


def test_cholesky_and_logdet():
    rng = np.random.default_rng(3)
    M = random_spd(rng, 4)
    Lc = cholesky(M)
    np.testing.assert_allclose(Lc @ Lc.T, M, rtol=1e-13)
    assert logdet_spd(M) == pytest.approx(np.log2(np.linalg.det(M)), rel=1e-12)
    np.testing.assert_allclose(spd_inv(M) @ M, np.eye(4), atol=1e-12)
    assert is_spd(M) and not is_spd(-M)
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, -1.0]))


def test_spectral_radius():
    assert spectral_radius(np.array([[0.0, 2.0], [-2.0, 0.0]])) == pytest.approx(2.0)
