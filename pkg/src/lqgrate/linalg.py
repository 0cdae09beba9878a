"""Dense symmetric linear algebra for desk-scale matrices (dim <= 8 or so).

Every symmetric matrix in the package (noise and cost weights, Riccati
solutions, covariances, SNR matrices) passes through :func:`sym` on
construction so that ``M[i, j] == M[j, i]`` holds bit-for-bit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceFailure, NotPositiveDefinite, NotPSD

JACOBI_MAX_SWEEPS = 100
RANK_TOL = 1e-9


def sym(M) -> np.ndarray:
    """Return ``M`` as a float array, exactly symmetrized."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {M.shape}")
    # IEEE addition is commutative, so this is symmetric bit-for-bit.
    return 0.5 * (M + M.T)


def cholesky(M) -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefinite on a nonpositive pivot."""
    try:
        return np.linalg.cholesky(sym(M))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def logdet_spd(M) -> float:
    """Base-2 log-determinant of a symmetric positive definite matrix."""
    L = cholesky(M)
    return 2.0 * float(np.sum(np.log2(np.diag(L))))


def is_spd(M) -> bool:
    try:
        cholesky(M)
    except NotPositiveDefinite:
        return False
    return True


def eig_sym(M, max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns ``(lam, U)`` with ``lam`` sorted in descending order and
    ``M = U @ diag(lam) @ U.T``.
    """
    a = sym(M).copy()
    n = a.shape[0]
    U = np.eye(n)
    scale = float(np.linalg.norm(a))
    if scale == 0.0 or n == 1:
        return _sorted(np.diag(a).copy(), U)

    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2)))
        if off <= 1e-300 or off < 1e-15 * scale:
            return _sorted(np.diag(a).copy(), U)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Rutishauser's stable formulation of the rotation angle.
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                up = U[:, p].copy()
                uq = U[:, q].copy()
                U[:, p] = c * up - s * uq
                U[:, q] = s * up + c * uq
    raise ConvergenceFailure(f"Jacobi eigensolver exceeded {max_sweeps} sweeps")


def _sorted(lam: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-lam, kind="stable")
    return lam[order], U[:, order]


def psd_rank(M, tol: float = RANK_TOL) -> int:
    """Numerical rank of a PSD matrix: eigenvalues above ``tol * max(1, lam_max)``."""
    lam, _ = eig_sym(M)
    lam_max = float(lam[0])
    if float(lam[-1]) < -tol * max(1.0, abs(lam_max)):
        raise NotPSD(f"smallest eigenvalue {lam[-1]:.3e} is below -tol")
    return int(np.sum(lam > tol * max(1.0, lam_max)))


def spd_inv(M) -> np.ndarray:
    """Inverse of an SPD matrix through its Cholesky factor, symmetrized."""
    L = cholesky(M)
    Linv = np.linalg.solve(L, np.eye(L.shape[0]))
    return sym(Linv.T @ Linv)


def spectral_radius(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.max(np.abs(np.linalg.eigvals(A))))
