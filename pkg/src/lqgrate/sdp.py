"""Minimum directed-information rate DI(gamma) under an LQG cost budget.

The max-det program over (P, Pi) is reduced to a problem in P alone.  For
fixed P the objective decreases in Pi, so the block LMI is tight at the
Schur complement ``Pi = P - P A' (A P A' + W)^{-1} A P``, and

    1/2 log det Pi^{-1} + 1/2 log det W = 1/2 log det(A P A' + W) - 1/2 log det P,

which is convex in P.  What remains is

    minimize    f(P) = 1/2 log det(A P A' + W) - 1/2 log det P
    subject to  Tr(Theta P) <= gamma - Tr(W S),   P <= A P A' + W,

solved with a log-barrier Newton method in the n(n+1)/2 free entries of P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleBudget, LqgRateError, SolverFailure
from .linalg import eig_sym, logdet_spd, psd_rank, spd_inv, spectral_radius, sym
from .lqr import LqrCertainty, PlantModel, min_cost
from .validation import capacity_gap_bound

LN2 = math.log(2.0)

MU_INIT = 1.0
MU_FACTOR = 5.0
GAP_TOL = 1e-9
NEWTON_TOL = 1e-22
QUADRATIC_ZONE = 1e-6
MAX_NEWTON = 60
MAX_OUTER = 60
P_BLOWUP = 1e12


@dataclass(frozen=True, eq=False)
class DiSolution:
    gamma: float
    P_opt: np.ndarray
    Pi_opt: np.ndarray
    di_bits: float
    snr: np.ndarray
    rank_r: int
    kkt_residual: float
    solver_iterations: int
    budget_multiplier: float = 0.0
    A: np.ndarray = field(default=None, repr=False)
    W: np.ndarray = field(default=None, repr=False)

    @property
    def upper_bits(self) -> float:
        return upper_bound_bits(self.di_bits, self.rank_r)


def upper_bound_bits(di_bits: float, rank_r: int) -> float:
    """DI + (r/2) log2(4 pi e / 12) + 1."""
    gap = capacity_gap_bound(rank_r) if rank_r > 0 else 0.0
    return di_bits + gap + 1.0


def _sym_basis(n: int) -> np.ndarray:
    """Columns are vec(E_k) for the symmetric basis E_ii, E_ij + E_ji (i < j)."""
    cols = []
    for j in range(n):
        for i in range(j, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            cols.append(E.reshape(-1))
    return np.array(cols).T


class _Problem:
    """Barrier subproblem  f(P) + mu * phi(P)  in symmetric coordinates."""

    def __init__(self, model: PlantModel, cert: LqrCertainty, budget: float):
        self.A = model.A
        self.W = model.W
        self.Theta = cert.Theta
        self.budget = budget
        n = model.n
        self.n = n
        self.D = _sym_basis(n)
        self.AA = np.kron(self.A, self.A)
        self.lift = self.AA - np.eye(n * n)
        self.theta_vec = self.D.T @ self.Theta.reshape(-1)

    def unpack(self, p: np.ndarray) -> np.ndarray:
        return sym((self.D @ p).reshape(self.n, self.n))

    def pack(self, P: np.ndarray) -> np.ndarray:
        idx = [(i, j) for j in range(self.n) for i in range(j, self.n)]
        return np.array([P[i, j] for i, j in idx])

    def parts(self, P: np.ndarray):
        """(F, slack matrix, budget slack, Cholesky factors of P, F, slack), or
        None when P leaves the barrier domain."""
        F = sym(self.A @ P @ self.A.T + self.W)
        slack_budget = self.budget - float(np.sum(self.Theta * P))
        if slack_budget <= 0.0:
            return None
        Sl = F - P
        try:
            LP = np.linalg.cholesky(P)
            LS = np.linalg.cholesky(Sl)
            LF = np.linalg.cholesky(F)
        except np.linalg.LinAlgError:
            return None
        return F, Sl, slack_budget, (LP, LF, LS)

    @staticmethod
    def _logdet(L: np.ndarray) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(L))))

    @staticmethod
    def _inv(L: np.ndarray) -> np.ndarray:
        Linv = np.linalg.solve(L, np.eye(L.shape[0]))
        Minv = Linv.T @ Linv
        return 0.5 * (Minv + Minv.T)

    def merit(self, P: np.ndarray, mu: float):
        pp = self.parts(P)
        if pp is None:
            return math.inf
        _, _, sb, (LP, LF, LS) = pp
        return 0.5 * (self._logdet(LF) - self._logdet(LP)) + mu * (-math.log(sb) - self._logdet(LS))

    def derivatives(self, P: np.ndarray, mu: float):
        _, _, sb, (LP, LF, LS) = self.parts(P)
        Finv, Pinv, Slinv = self._inv(LF), self._inv(LP), self._inv(LS)
        D, AA, lift = self.D, self.AA, self.lift

        grad_f = 0.5 * (self.A.T @ Finv @ self.A) - 0.5 * Pinv
        grad_phi = self.Theta / sb - (self.A.T @ Slinv @ self.A - Slinv)
        g = D.T @ (grad_f + mu * grad_phi).reshape(-1)

        H_f = 0.5 * np.kron(Pinv, Pinv) - 0.5 * AA.T @ np.kron(Finv, Finv) @ AA
        tv = self.Theta.reshape(-1)
        H_phi = np.outer(tv, tv) / sb**2 + lift.T @ np.kron(Slinv, Slinv) @ lift
        H = D.T @ (H_f + mu * H_phi) @ D
        return g, 0.5 * (H + H.T)

    def kkt(self, P: np.ndarray, mu: float) -> tuple[float, float, float]:
        """KKT residual of P with fitted multipliers.

        Returns ``(stationarity, complementarity, budget_multiplier)``.
        Multipliers of inactive constraints come from the barrier
        (``mu / slack``); on the near-active face they are refit by least
        squares, since ``mu / slack`` is dominated by roundoff in the slack.
        """
        F, Sl, sb, _ = self.parts(P)
        A = self.A
        grad_f = 0.5 * (A.T @ spd_inv(F) @ A) - 0.5 * spd_inv(P)
        cut = math.sqrt(mu)
        s_eig, U = eig_sym(Sl)
        near = s_eig < cut * max(1.0, float(s_eig[0]))
        Ui = U[:, ~near]
        Lam_inactive = mu * (Ui / s_eig[~near]) @ Ui.T

        # unknowns: lambda (if the budget is near-active), then svec(M) with
        # Lambda_active = Ua M Ua'
        Ua = U[:, near]
        k = Ua.shape[1]
        columns = []
        budget_active = sb < cut * max(1.0, self.budget)
        if budget_active:
            columns.append(self.Theta.reshape(-1))
        pairs = [(i, j) for j in range(k) for i in range(j, k)]
        for i, j in pairs:
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            L = Ua @ E @ Ua.T
            columns.append(-(A.T @ L @ A - L).reshape(-1))
        rhs = -(grad_f - (A.T @ Lam_inactive @ A - Lam_inactive)).reshape(-1)
        lam = 0.0 if budget_active else mu / sb
        if not budget_active:
            rhs = rhs - lam * self.Theta.reshape(-1)
        M = np.zeros((k, k))
        if columns:
            coef = np.linalg.lstsq(np.array(columns).T, rhs, rcond=None)[0]
            if budget_active:
                lam, coef = float(coef[0]), coef[1:]
            for (i, j), c in zip(pairs, coef):
                M[i, j] = M[j, i] = c
        Lam = Lam_inactive + Ua @ M @ Ua.T
        station = grad_f + lam * self.Theta - (A.T @ Lam @ A - Lam)
        dual_infeas = max(0.0, -lam)
        if k:
            dual_infeas = max(dual_infeas, -float(eig_sym(M)[0][-1]))
        comp = abs(lam) * sb + abs(float(np.sum(Lam * Sl)))
        return float(np.linalg.norm(station)) + dual_infeas, comp, lam


def _initial_point(model: PlantModel, cert: LqrCertainty, budget: float) -> np.ndarray:
    A, W = model.A, model.W
    if spectral_radius(A) < 1.0:
        X = W.copy()
        for _ in range(100_000):
            X_next = sym(A @ X @ A.T + W)
            if np.linalg.norm(X_next - X) <= 1e-13 * np.linalg.norm(X_next):
                X = X_next
                break
            X = X_next
    else:
        X = W.copy()
    load = float(np.sum(cert.Theta * X))
    eps = 0.5 * min(1.0, budget / max(load, 1e-12))
    return eps * X


def solve_di(model: PlantModel, cert: LqrCertainty, gamma: float) -> DiSolution:
    """Solve the DI(gamma) program; ``di_bits`` is in bits per time step."""
    gamma = float(gamma)
    floor = min_cost(model, cert)
    budget = gamma - floor
    if not budget > 0.0:
        raise InfeasibleBudget(f"gamma={gamma:.12g} does not exceed Tr(WS)={floor:.12g}")

    prob = _Problem(model, cert, budget)
    n = model.n
    p = prob.pack(_initial_point(model, cert, budget))
    mu = MU_INIT
    iterations = 0
    for _ in range(MAX_OUTER):
        last_decrement = math.inf
        for _ in range(MAX_NEWTON):
            P = prob.unpack(p)
            g, H = prob.derivatives(P, mu)
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, g, rcond=None)[0]
            decrement = float(-g @ step)
            iterations += 1
            if decrement / 2.0 <= NEWTON_TOL:
                break
            if decrement < QUADRATIC_ZONE and decrement > 0.5 * last_decrement:
                break  # stalled at roundoff
            last_decrement = decrement
            if decrement < QUADRATIC_ZONE:
                # Merit differences here are below roundoff; take the full
                # step as long as it stays strictly feasible.
                t = 1.0
                while prob.parts(prob.unpack(p + t * step)) is None and t > 1e-6:
                    t *= 0.5
            else:
                current = prob.merit(P, mu)
                t = 1.0
                while t > 1e-16:
                    if prob.merit(prob.unpack(p + t * step), mu) <= current - 0.25 * t * decrement:
                        break
                    t *= 0.5
            if t <= 1e-16 or prob.parts(prob.unpack(p + t * step)) is None:
                break
            p = p + t * step
            if np.max(np.abs(p)) > P_BLOWUP:
                raise SolverFailure("iterates diverge: the budget leaves an unstable mode unconstrained")
        if (n + 1) * mu < GAP_TOL:
            break
        mu /= MU_FACTOR
    else:
        raise SolverFailure("barrier schedule exhausted before reaching the gap tolerance")

    P = prob.unpack(p)
    station, gap, lam = prob.kkt(P, mu)
    kkt_residual = max(station, gap)
    if kkt_residual > 1e-6:
        raise SolverFailure(f"KKT residual {kkt_residual:.3e} above tolerance")

    F = sym(model.A @ P @ model.A.T + model.W)
    Pi = sym(P - P @ model.A.T @ np.linalg.solve(F, model.A @ P))
    di_bits = max(0.0, -0.5 * logdet_spd(Pi) + 0.5 * logdet_spd(model.W))
    snr = sym(spd_inv(P) - spd_inv(F))
    for M in (P, Pi, snr):
        M.setflags(write=False)
    return DiSolution(
        gamma=gamma,
        P_opt=P,
        Pi_opt=Pi,
        di_bits=di_bits,
        snr=snr,
        rank_r=psd_rank(snr),
        kkt_residual=kkt_residual,
        solver_iterations=iterations,
        budget_multiplier=lam,
        A=model.A,
        W=model.W,
    )


@dataclass(frozen=True)
class TradeoffPoint:
    gamma: float
    di_bits: float
    upper_bits: float
    rank_r: int
    error: str | None = None


def tradeoff_curve(model: PlantModel, cert: LqrCertainty, gammas) -> list[TradeoffPoint]:
    """DI(gamma) and the coding upper bound over an ascending budget grid.

    Grid points whose solve fails are returned with NaN values and the error
    message instead of aborting the sweep.
    """
    out = []
    for gamma in gammas:
        try:
            sol = solve_di(model, cert, gamma)
        except LqgRateError as exc:
            out.append(TradeoffPoint(float(gamma), math.nan, math.nan, -1, f"{type(exc).__name__}: {exc}"))
            continue
        out.append(TradeoffPoint(sol.gamma, sol.di_bits, sol.upper_bits, sol.rank_r))
    return out
