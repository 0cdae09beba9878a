"""Closed-loop simulation of the quantized LQG architecture.

One step: innovation ``theta = C (x - xhat_pred)``, subtractive dithered
quantization, Shannon-Fano coding of the cell, steady Kalman update with the
reconstruction ``q``, certainty-equivalence control ``u = K xhat``, plant and
predictor updates.  Long runs go through the kernel in :mod:`lqgrate.kernel`;
:class:`Encoder` and :class:`Decoder` are the bit-level reference used to show
the two link ends stay synchronized.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from . import kernel, prng
from .codec import TAIL_EPS, CodebookCache, tail_quantile
from .errors import InsufficientSamples, ModelError, NoConvergence, NumericalDivergence
from .linalg import cholesky, spectral_radius, sym
from .lqr import LqrCertainty, PlantModel, solve_dare
from .quantizer import dither_value, dithered
from .sdp import DiSolution, solve_di
from .sensor import SensorRealization, realize_or_open_loop

BURN_IN = 1000
BATCH = 100
MIN_STEPS = 1000
MIN_SAMPLES = 10_000
DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True, eq=False)
class LoopDesign:
    model: PlantModel
    cert: LqrCertainty
    sensor: SensorRealization
    sol: DiSolution
    seed: int = 0
    eps: float = TAIL_EPS

    def __post_init__(self):
        n, m, r = self.model.n, self.model.m, self.sensor.r
        shapes = {
            "K": (self.cert.K.shape, (m, n)),
            "C": (self.sensor.C.shape, (r, n)),
            "L": (self.sensor.L.shape, (n, r)),
            "V": (self.sensor.V.shape, (r, r)),
            "Delta": (self.sensor.Delta.shape, (r,)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise ModelError(f"{name} has shape {got}, expected {want}")
        if not 0 <= self.seed <= prng.MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def synthesize(cls, model: PlantModel, gamma: float, seed: int = 0) -> LoopDesign:
        cert = solve_dare(model)
        sol = solve_di(model, cert, gamma)
        return cls(model, cert, realize_or_open_loop(sol), sol, seed)

    def with_sensor(self, sensor: SensorRealization) -> LoopDesign:
        return LoopDesign(self.model, self.cert, sensor, self.sol, self.seed, self.eps)

    @property
    def theta_cov(self) -> np.ndarray:
        return self.sensor.innovation_cov

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.diag(self.theta_cov))

    @property
    def z(self) -> float:
        return tail_quantile(self.eps, self.sensor.r)

    def codebooks(self, maxsize: int = 4096) -> CodebookCache:
        return CodebookCache(self.theta_cov, self.sensor.Delta, self.eps, maxsize)


# --- scalar linear algebra shared with the kernel ----------------------------
# Accumulation order matches the compiled loop exactly.

def _matvec(M, v) -> list[float]:
    out = []
    for row in M:
        acc = 0.0
        for a, b in zip(row, v):
            acc += a * b
        out.append(acc)
    return out


def _affine(A, x, B, u, w=None) -> list[float]:
    out = []
    for i, (ra, rb) in enumerate(zip(A, B)):
        acc = 0.0
        for a, b in zip(ra, x):
            acc += a * b
        for a, b in zip(rb, u):
            acc += a * b
        if w is not None:
            acc += w[i]
        out.append(acc)
    return out


def _quad(v, M, acc: float = 0.0) -> float:
    for i, row in enumerate(M):
        for j, a in enumerate(row):
            acc += v[i] * a * v[j]
    return acc


def initial_state(design: LoopDesign, trial: int = 0) -> list[float]:
    """x_1 ~ N(0, P0) from the trial's INIT stream."""
    key = prng.stream_key(design.seed, prng.STREAM_INIT, trial)
    Lc = cholesky(design.model.P_prior).tolist()
    return _matvec(Lc, prng.normals(key, 0, design.model.n))


def process_noise(design: LoopDesign, key: int, t: int) -> list[float]:
    return _matvec(cholesky(design.model.W).tolist(), prng.normals(key, t, design.model.n))


# --- the two ends of the link ------------------------------------------------

class _Estimator:
    """State both ends keep: xhat_{t|t-1} and the dither position."""

    def __init__(self, design: LoopDesign, trial: int, codebooks: CodebookCache | None):
        self.design = design
        s = design.sensor
        self.A = design.model.A.tolist()
        self.B = design.model.B.tolist()
        self.K = design.cert.K.tolist()
        self.L = s.L.tolist()
        self.C = s.C.tolist()
        self.delta = [float(d) for d in s.Delta]
        self.key = prng.stream_key(design.seed, prng.STREAM_DITHER, trial)
        self.books = codebooks or design.codebooks()
        self.x_pred = [0.0] * design.model.n
        self.t = 0

    def dither(self) -> list[float]:
        return [dither_value(self.key, self.t, i, d) for i, d in enumerate(self.delta)]

    def book(self, xi):
        return self.books.book(xi)

    def update(self, q) -> list[float]:
        """Measurement and time update with reconstruction q; returns u_t."""
        lq = _matvec(self.L, q)
        x_filt = [p + a for p, a in zip(self.x_pred, lq)]
        u = _matvec(self.K, x_filt)
        self.x_filt = x_filt
        self.x_pred = _affine(self.A, x_filt, self.B, u)
        self.t += 1
        return u


class Encoder(_Estimator):
    """Sensor side: sees x_t, emits one codeword per step."""

    def encode(self, x) -> tuple[str, tuple[int, ...], list[float]]:
        e = [a - b for a, b in zip(x, self.x_pred)]
        theta = _matvec(self.C, e)
        xi = self.dither()
        cells, q = [], []
        for th, x_i, d in zip(theta, xi, self.delta):
            k, qi = dithered(th, x_i, d)
            cells.append(k)
            q.append(qi)
        bits = self.book(xi).encode(cells).bits
        self.theta = theta
        self.u = self.update(q)
        return bits, tuple(cells), q


class Decoder(_Estimator):
    """Controller side: sees only codewords, regenerates the dither from the seed."""

    def decode(self, bits: str) -> list[float]:
        xi = self.dither()
        cell = self.book(xi).decode(bits, len(xi))
        q = [k * d - x_i for k, d, x_i in zip(cell, self.delta, xi)]
        return self.update(q)


# --- single step -------------------------------------------------------------

@dataclass
class LoopState:
    x: list
    x_pred: list
    t: int = 0


@dataclass
class StepRecord:
    theta: list
    dither: list
    cells: tuple
    q: list
    x_filt: list
    u: list
    cost: float
    bits: str


def step(state: LoopState, design: LoopDesign, trial: int = 0, *, noise=None, dither=None,
         codebooks: CodebookCache | None = None) -> tuple[LoopState, StepRecord]:
    """Advance the loop by one step from ``state``.

    ``noise`` and ``dither`` override the seeded draws (for hand traces).
    """
    s = design.sensor
    C, L, K = s.C.tolist(), s.L.tolist(), design.cert.K.tolist()
    A, B = design.model.A.tolist(), design.model.B.tolist()
    delta = [float(d) for d in s.Delta]
    if dither is None:
        key = prng.stream_key(design.seed, prng.STREAM_DITHER, trial)
        dither = [dither_value(key, state.t, i, d) for i, d in enumerate(delta)]
    if noise is None:
        noise = process_noise(design, prng.stream_key(design.seed, prng.STREAM_NOISE, trial), state.t)
    dither = [float(v) for v in dither]

    theta = _matvec(C, [a - b for a, b in zip(state.x, state.x_pred)])
    cells, q = [], []
    for th, xi, d in zip(theta, dither, delta):
        k, qi = dithered(th, xi, d)
        cells.append(k)
        q.append(qi)
    books = codebooks or design.codebooks(maxsize=1)
    bits = books.book(dither).encode(cells).bits
    x_filt = [p + a for p, a in zip(state.x_pred, _matvec(L, q))]
    u = _matvec(K, x_filt)
    x_next = _affine(A, state.x, B, u, [float(v) for v in noise])
    if any(not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT for v in x_next):
        raise NumericalDivergence(f"state norm exceeded {DIVERGENCE_LIMIT:g} at step {state.t}")
    cost = _quad(u, design.model.R.tolist(), _quad(x_next, design.model.Q.tolist()))
    record = StepRecord(theta, dither, tuple(cells), q, x_filt, u, cost, bits)
    return LoopState(x_next, _affine(A, x_filt, B, u), state.t + 1), record


def run_reference(design: LoopDesign, steps: int, trial: int = 0):
    """Drive the plant with separate encoder and decoder objects.

    Returns (u from the decoder, xhat from the encoder, xhat from the decoder,
    codeword lengths); the x trajectory uses the same noise as the kernel.
    """
    books = design.codebooks()
    enc, dec = Encoder(design, trial, books), Decoder(design, trial, books)
    noise_key = prng.stream_key(design.seed, prng.STREAM_NOISE, trial)
    A, B = design.model.A.tolist(), design.model.B.tolist()
    x = initial_state(design, trial)
    us, enc_x, dec_x, lengths = [], [], [], []
    for t in range(steps):
        bits, _, _ = enc.encode(x)
        u = dec.decode(bits)
        us.append(u)
        enc_x.append(enc.x_filt)
        dec_x.append(dec.x_filt)
        lengths.append(len(bits))
        x = _affine(A, x, B, u, process_noise(design, noise_key, t))
    return np.array(us), np.array(enc_x), np.array(dec_x), np.array(lengths)


# --- Monte Carlo summary -----------------------------------------------------

@dataclass
class SimulationSummary:
    steps: int
    trials: int
    avg_cost: float
    avg_rate_bits: float
    di_bits: float
    upper_bits: float
    cost_ci_halfwidth: float
    rate_ci_halfwidth: float
    stationary_cov_error: float
    gamma: float = math.nan
    rank_r: int = 0
    entropy_bits: float = math.nan
    escapes: int = 0
    burn_in: int = BURN_IN
    seed: int = 0
    mean_x: np.ndarray = field(default=None, repr=False)
    cov_x: np.ndarray = field(default=None, repr=False)
    mean_u: np.ndarray = field(default=None, repr=False)
    cov_u: np.ndarray = field(default=None, repr=False)

    SCALARS = ("steps", "trials", "gamma", "rank_r", "avg_cost", "cost_ci_halfwidth", "avg_rate_bits",
               "rate_ci_halfwidth", "entropy_bits", "di_bits", "upper_bits", "stationary_cov_error",
               "escapes", "burn_in", "seed")

    def scalars(self) -> dict:
        return {name: getattr(self, name) for name in self.SCALARS}


def batch_ci(series_by_trial, batch: int = BATCH) -> float:
    """3 sd / sqrt(#batches) over non-overlapping batch means, pooled across trials."""
    means = []
    for series in series_by_trial:
        nb = len(series) // batch
        if nb:
            means.append(np.asarray(series[: nb * batch], dtype=float).reshape(nb, batch).mean(axis=1))
    means = np.concatenate(means) if means else np.empty(0)
    if means.size < 2:
        return math.inf
    return float(3.0 * np.std(means, ddof=1) / math.sqrt(means.size))


def _kernel_args(design: LoopDesign):
    m = design.model
    s = design.sensor
    c = np.ascontiguousarray
    return dict(
        A=c(m.A), B=c(m.B), K=c(design.cert.K), L=c(s.L), C=c(s.C), Wc=c(cholesky(m.W)),
        Q=c(m.Q), R=c(m.R), delta=c(s.Delta, dtype=float), sigma=c(design.sigmas), z=design.z,
    )


def run_trial(design: LoopDesign, steps: int, trial: int = 0, burn: int = BURN_IN,
              record_u: bool = False, backend: str | None = None, codebooks: CodebookCache | None = None) -> dict:
    """One trial through the kernel, escape lengths filled in from real codebooks."""
    out = kernel.get_run_trial(backend)(
        **_kernel_args(design),
        x0=np.array(initial_state(design, trial)),
        key_noise=prng.stream_key(design.seed, prng.STREAM_NOISE, trial),
        key_dither=prng.stream_key(design.seed, prng.STREAM_DITHER, trial),
        burn=burn, steps=steps, record_u=record_u, limit=DIVERGENCE_LIMIT,
    )
    if out["status"] == 2:
        raise NumericalDivergence(f"state norm exceeded {DIVERGENCE_LIMIT:g} at step {out['fail_step']}")
    if out["status"] == 1:
        raise NumericalDivergence(f"noise generator failed at step {out['fail_step']}")
    if len(out["escape_steps"]):
        books = codebooks or design.codebooks()
        key = prng.stream_key(design.seed, prng.STREAM_DITHER, trial)
        delta = [float(d) for d in design.sensor.Delta]
        for s_idx, cells in zip(out["escape_steps"], out["escape_cells"]):
            xi = [dither_value(key, burn + int(s_idx), i, d) for i, d in enumerate(delta)]
            out["bits"][s_idx] = books.book(xi).encode(cells.tolist()).length
    return out


def simulate(design: LoopDesign, steps: int, trials: int, burn: int = BURN_IN,
             backend: str | None = None, trace=None) -> SimulationSummary:
    if trials < 1 or steps < MIN_STEPS:
        raise InsufficientSamples(f"need steps >= {MIN_STEPS} and trials >= 1")
    if steps * trials < MIN_SAMPLES:
        raise InsufficientSamples(f"trials * steps = {steps * trials} < {MIN_SAMPLES}")
    n, mdim = design.model.n, design.model.m
    costs, bits = [], []
    ideal_sum = 0.0
    escapes = 0
    sx, sxx = np.zeros(n), np.zeros((n, n))
    su, suu = np.zeros(mdim), np.zeros((mdim, mdim))
    books = design.codebooks()
    for trial in range(trials):
        out = run_trial(design, steps, trial, burn, backend=backend, codebooks=books)
        costs.append(out["cost"])
        bits.append(out["bits"])
        ideal_sum += math.fsum(out["ideal"])
        escapes += len(out["escape_steps"])
        sx += out["sum_x"]
        sxx += out["sum_xx"]
        su += out["sum_u"]
        suu += out["sum_uu"]
        if trace is not None and trial == 0:
            write_trace_csv(trace, out["cost"], out["bits"])

    N = steps * trials
    mean_x, mean_u = sx / N, su / N
    cov_x = sym(sxx / N - np.outer(mean_x, mean_x))
    cov_u = sym(suu / N - np.outer(mean_u, mean_u))
    cov_ref, _, _ = analytic_loop_covariance(design)
    cov_err = float(np.linalg.norm(cov_x - cov_ref) / np.linalg.norm(cov_ref))
    return SimulationSummary(
        steps=steps,
        trials=trials,
        avg_cost=float(np.mean(np.concatenate(costs))),
        avg_rate_bits=float(np.mean(np.concatenate(bits))),
        di_bits=design.sol.di_bits,
        upper_bits=design.sol.upper_bits,
        cost_ci_halfwidth=batch_ci(costs),
        rate_ci_halfwidth=batch_ci(bits),
        stationary_cov_error=cov_err,
        gamma=design.sol.gamma,
        rank_r=design.sensor.r,
        entropy_bits=ideal_sum / N,
        escapes=escapes,
        burn_in=burn,
        seed=design.seed,
        mean_x=mean_x,
        cov_x=cov_x,
        mean_u=mean_u,
        cov_u=cov_u,
    )


def analytic_loop_covariance(design: LoopDesign) -> tuple[np.ndarray, np.ndarray, float]:
    """Stationary second moments of the loop with quantization noise of covariance V.

    Joint state ``z = [x; e]`` with ``e = x - xhat_pred``:
    ``z+ = F z + G [w; eta]``.
    Returns (Cov x, Cov u, E|x+|_Q^2 + E|u|_R^2).
    """
    m, s = design.model, design.sensor
    A, B, K, L, C, V = m.A, m.B, design.cert.K, s.L, s.C, s.V
    n = m.n
    I = np.eye(n)
    M = I - L @ C
    F = np.block([[A + B @ K, -B @ K @ M], [np.zeros((n, n)), A @ M]])
    G = np.block([[I, B @ K @ L], [I, -A @ L]])
    if spectral_radius(F) >= 1.0:
        raise NoConvergence("closed loop is not mean-square stable")
    noise = sla.block_diag(m.W, V)
    Z = sym(sla.solve_discrete_lyapunov(F, G @ noise @ G.T))
    H = np.hstack([K, -K @ M])
    cov_u = sym(H @ Z @ H.T + K @ L @ V @ L.T @ K.T)
    cov_x = Z[:n, :n].copy()
    cost = float(np.trace(m.Q @ cov_x) + np.trace(m.R @ cov_u))
    return cov_x, cov_u, cost


# --- CSV output --------------------------------------------------------------

def write_trace_csv(path, cost, bits) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "cost_increment", "l_t"])
        for t, (c, l) in enumerate(zip(cost, bits)):
            writer.writerow([t, f"{c:.12g}", int(l)])


def write_summary_csv(path, summary: SimulationSummary) -> None:
    from .sensor import format_number

    row = summary.scalars()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(row))
        writer.writerow([format_number(v) if isinstance(v, float) else v for v in row.values()])
