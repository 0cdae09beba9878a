"""Plant model and the certainty-equivalence LQR quantities (S, K, Theta)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, NoConvergence, NotDetectable, NotStabilizable
from .linalg import is_spd, spectral_radius, sym

DARE_TOL = 1e-12
DARE_MAX_ITER = 100_000
PBH_TOL = 1e-8


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ModelError(f"{name} must be a matrix, got {M.ndim}-d array")
    if not np.all(np.isfinite(M)):
        raise ModelError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Linear plant x_{t+1} = A x_t + B u_t + w_t with quadratic cost weights.

    ``W`` is the process-noise covariance, ``Q``/``R`` weight state and input in
    the per-step cost, and ``P_prior`` is the covariance of the initial state.
    Scalars and 1-d arrays are promoted to matrices.
    """

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P_prior: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ModelError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        fields = {"A": A, "B": B}
        for name, size in (("W", n), ("Q", n), ("R", m), ("P_prior", n)):
            M = _as_matrix(getattr(self, name), name)
            if M.shape != (size, size):
                raise ModelError(f"{name} must be {size}x{size}, got {M.shape}")
            if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12):
                raise ModelError(f"{name} is not symmetric")
            M = sym(M)
            if not is_spd(M):
                raise ModelError(f"{name} is not positive definite")
            fields[name] = M
        for name, M in fields.items():
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @classmethod
    def scalar(cls, a, b=1.0, w=1.0, q=1.0, r=1.0, p0=1.0) -> PlantModel:
        return cls(a, b, w, q, r, p0)

    def check_structure(self) -> None:
        """PBH tests: (A, B) stabilizable and (A, Q) detectable."""
        n = self.n
        for lam in np.linalg.eigvals(self.A):
            if abs(lam) < 1.0:
                continue
            shifted = self.A - lam * np.eye(n)
            if _rank(np.hstack([shifted, self.B])) < n:
                raise NotStabilizable(f"mode {lam:.6g} is not controllable from B")
            if _rank(np.vstack([shifted, self.Q])) < n:
                raise NotDetectable(f"mode {lam:.6g} is not observable through Q")


def _rank(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > PBH_TOL * max(1.0, float(s[0]))))


@dataclass(frozen=True, eq=False)
class LqrCertainty:
    S: np.ndarray
    K: np.ndarray
    Theta: np.ndarray
    residual: float
    iterations: int = 0


def _riccati_map(model: PlantModel, S: np.ndarray) -> np.ndarray:
    A, B = model.A, model.B
    SB = S @ B
    G = B.T @ SB + model.R
    return sym(A.T @ S @ A - A.T @ SB @ np.linalg.solve(G, SB.T @ A) + model.Q)


def dare_residual(model: PlantModel, S: np.ndarray) -> float:
    """Frobenius norm of A'SA - S - A'SB(B'SB+R)^{-1}B'SA + Q."""
    return float(np.linalg.norm(_riccati_map(model, S) - S))


def solve_dare(
    model: PlantModel, tol: float = DARE_TOL, max_iter: int = DARE_MAX_ITER
) -> LqrCertainty:
    """Solve the control Riccati equation by value iteration from S0 = Q.

    The iteration stops once the residual falls below ``tol * max(1, ||S||_F)``.
    """
    model.check_structure()
    S = model.Q.copy()
    for k in range(1, max_iter + 1):
        S_next = _riccati_map(model, S)
        step = float(np.linalg.norm(S_next - S))
        S = S_next
        if not np.all(np.isfinite(S)):
            break
        if step <= tol * max(1.0, float(np.linalg.norm(S))):
            break
    else:
        raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps")
    if not np.all(np.isfinite(S)):
        raise NoConvergence("Riccati iteration diverged")

    G = model.B.T @ S @ model.B + model.R
    K = -np.linalg.solve(G, model.B.T @ S @ model.A)
    Theta = sym(K.T @ G @ K)
    if spectral_radius(model.A + model.B @ K) >= 1.0:
        raise NoConvergence("closed loop A + BK is not Schur stable")
    for M in (S, K, Theta):
        M.setflags(write=False)
    return LqrCertainty(S=S, K=K, Theta=Theta, residual=dare_residual(model, S), iterations=k)


def min_cost(model: PlantModel, cert: LqrCertainty) -> float:
    """Tr(W S): the LQG cost approached only in the infinite-rate limit."""
    return float(np.trace(model.W @ cert.S))
