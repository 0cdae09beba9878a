"""Sensor realization of the optimal SNR matrix and its steady Kalman filter.

The SNR matrix is factored as ``C' V^{-1} C`` with orthonormal rows in C and
diagonal V, and each channel gets the quantizer step ``Delta_i`` with
``Delta_i**2 / 12 == V_ii``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoConvergence, ParseError, ZeroRank
from .linalg import eig_sym, psd_rank, spectral_radius, sym
from .sdp import DiSolution

KALMAN_TOL = 1e-12
KALMAN_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class SensorRealization:
    C: np.ndarray
    V: np.ndarray
    Delta: np.ndarray
    L: np.ndarray
    P_pred: np.ndarray
    P_filt: np.ndarray

    @property
    def r(self) -> int:
        return self.C.shape[0]

    @property
    def innovation_cov(self) -> np.ndarray:
        """Covariance C P_pred C' of theta_t = C (x_t - xhat_{t|t-1})."""
        if self.r == 0:
            return np.zeros((0, 0))
        return sym(self.C @ self.P_pred @ self.C.T)

    def scaled(self, delta_scale: float) -> SensorRealization:
        """Copy with every quantizer step multiplied by ``delta_scale``."""
        return SensorRealization(self.C, self.V, self.Delta * delta_scale, self.L, self.P_pred, self.P_filt)


def step_sizes(V: np.ndarray) -> np.ndarray:
    return np.sqrt(12.0 * np.diag(V))


def factor_snr(snr, r: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """C (orthonormal rows, first nonzero entry positive) and diagonal V with C' V^{-1} C = snr."""
    lam, U = eig_sym(snr)
    if r is None:
        r = psd_rank(snr)
    if r == 0:
        raise ZeroRank("the SNR matrix is zero; no sensor channel is needed")
    C = U[:, :r].T.copy()
    for row in C:
        nz = np.flatnonzero(np.abs(row) > 1e-14)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return C, np.diag(1.0 / lam[:r])


def realize_sensor(sol: DiSolution) -> SensorRealization:
    if sol.rank_r == 0:
        raise ZeroRank("the optimal SNR matrix is zero; no sensor channel is needed")
    C, V = factor_snr(sol.snr, sol.rank_r)
    L, P_pred, P_filt = _steady_kalman(sol.A, sol.W, C, V)
    return SensorRealization(C=C, V=V, Delta=step_sizes(V), L=L, P_pred=P_pred, P_filt=P_filt)


def open_loop_sensor(sol: DiSolution) -> SensorRealization:
    """Zero-rank realization: no channel, the estimator runs on prediction alone."""
    n = sol.A.shape[0]
    L, P_pred, P_filt = _steady_kalman(sol.A, sol.W, np.zeros((0, n)), np.zeros((0, 0)))
    return SensorRealization(C=np.zeros((0, n)), V=np.zeros((0, 0)), Delta=np.zeros(0), L=L,
                             P_pred=P_pred, P_filt=P_filt)


def realize_or_open_loop(sol: DiSolution) -> SensorRealization:
    try:
        return realize_sensor(sol)
    except ZeroRank:
        return open_loop_sensor(sol)


def steady_kalman(model, C, V) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stationary gain, prediction and filtered covariances for y = C x + v."""
    return _steady_kalman(model.A, model.W, np.atleast_2d(C), np.atleast_2d(V))


def _steady_kalman(A, W, C, V):
    n = A.shape[0]
    r = C.shape[0] if C.size else 0
    P = W.copy()
    if r == 0:
        if spectral_radius(A) >= 1.0:
            raise NoConvergence("no measurements and A is not Schur stable")
        for _ in range(KALMAN_MAX_ITER):
            P_next = sym(A @ P @ A.T + W)
            if np.linalg.norm(P_next - P) <= KALMAN_TOL * max(1.0, np.linalg.norm(P_next)):
                P = P_next
                return np.zeros((n, 0)), P, P.copy()
            P = P_next
        raise NoConvergence("open-loop covariance iteration did not converge")

    for _ in range(KALMAN_MAX_ITER):
        G = C @ P @ C.T + V
        P_f = sym(P - P @ C.T @ np.linalg.solve(G, C @ P))
        P_next = sym(A @ P_f @ A.T + W)
        done = np.linalg.norm(P_next - P) <= KALMAN_TOL * max(1.0, np.linalg.norm(P_next))
        P = P_next
        if done:
            break
    else:
        raise NoConvergence("filter Riccati iteration did not converge")
    L = P @ C.T @ np.linalg.inv(C @ P @ C.T + V)
    P_filt = sym((np.eye(n) - L @ C) @ P)
    return L, P, P_filt


def kalman_residual(A, W, C, V, P_pred) -> float:
    G = C @ P_pred @ C.T + V
    rhs = A @ (P_pred - P_pred @ C.T @ np.linalg.solve(G, C @ P_pred)) @ A.T + W
    return float(np.linalg.norm(rhs - P_pred))


def loop_directed_info_bits(sensor: SensorRealization) -> float:
    """1/2 log2 det(C P_pred C' + V) - 1/2 log2 det V: per-step DI of the realized loop."""
    G = sensor.innovation_cov + sensor.V
    return 0.5 * (float(np.linalg.slogdet(G)[1]) - float(np.sum(np.log(np.diag(sensor.V))))) / math.log(2.0)


# --- plain-text design files -------------------------------------------------

DESIGN_SECTIONS = ("C", "V", "Delta", "L", "K")


def format_matrix(M) -> list[str]:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return [" ".join(format_number(v) for v in row) for row in M]


def format_number(v: float) -> str:
    v = float(v)
    if v == 0.0:
        v = 0.0  # drop the sign of negative zero
    return f"{v:.12g}"


def write_design(sensor: SensorRealization, K, target=None, header: dict | None = None) -> str:
    """Serialize C, V, Delta, L, K as named sections; returns the text."""
    lines = [f"# {key} = {value}" for key, value in (header or {}).items()]
    blocks = {"C": sensor.C, "V": sensor.V, "Delta": sensor.Delta.reshape(1, -1), "L": sensor.L, "K": K}
    for name in DESIGN_SECTIONS:
        lines.append(name)
        lines.extend(format_matrix(blocks[name]))
    text = "\n".join(lines) + "\n"
    if target is not None:
        Path(target).write_text(text)
    return text


def parse_sections(text: str, required, source: str = "<input>", starts: dict | None = None) -> dict[str, np.ndarray]:
    """Parse ``name`` lines followed by rows of space-separated decimals.

    ``starts``, if given, is filled with the header line number of each section.
    """
    sections: dict[str, list[list[float]]] = {}
    starts = {} if starts is None else starts
    current = None
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) == 1 and tokens[0] in required:
            current = tokens[0]
            if current in sections:
                raise ParseError(f"{source}:{lineno}: duplicate section {current}")
            sections[current] = []
            starts[current] = lineno
            continue
        if current is None:
            raise ParseError(f"{source}:{lineno}: data before any section header")
        try:
            row = [float(tok) for tok in tokens]
        except ValueError:
            raise ParseError(f"{source}:{lineno}: section {current}: cannot parse {line!r}") from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError(f"{source}:{lineno}: section {current}: non-finite value")
        if sections[current] and len(row) != len(sections[current][0]):
            raise ParseError(
                f"{source}:{lineno}: section {current}: row has {len(row)} entries, expected {len(sections[current][0])}"
            )
        sections[current].append(row)
    for name in required:
        if name not in sections:
            raise ParseError(f"missing section {name}")
        if not sections[name]:
            raise ParseError(f"{source}:{starts[name]}: section {name} is empty")
    return {name: np.array(rows, dtype=float) for name, rows in sections.items()}


def read_design(source) -> tuple[SensorRealization, np.ndarray]:
    """Inverse of :func:`write_design`. P_pred/P_filt are not stored and come back empty."""
    path = Path(source)
    blocks = parse_sections(path.read_text(), DESIGN_SECTIONS, str(path))
    C, V, L = blocks["C"], blocks["V"], blocks["L"]
    empty = np.zeros((0, 0))
    sensor = SensorRealization(C=C, V=V, Delta=blocks["Delta"].reshape(-1), L=L, P_pred=empty, P_filt=empty)
    return sensor, blocks["K"]
