"""Information-theoretic reference quantities for the dithered-quantizer bounds.

These functions are independent of the control loop and serve as oracles:
the Gaussian rate-distortion function (reverse water-filling), the capacity
bound of the additive uniform-noise channel, and the mutual information of a
Gaussian input through that channel computed by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import QuadratureFailure
from .linalg import eig_sym

LOG2E = 1.0 / math.log(2.0)


def capacity_gap_bound(r: int) -> float:
    """(r/2) log2(4 pi e / 12), the per-step capacity bound of r uniform-noise channels."""
    if r < 1:
        raise ValueError("r must be a positive integer")
    return 0.5 * r * math.log2(4.0 * math.pi * math.e / 12.0)


def scalar_ecdq_gap() -> float:
    """1/2 log2(2 pi e / 12) + 1: the single-channel ECDQ gap measured against
    the directed information of the non-Gaussian loop."""
    return 0.5 * math.log2(2.0 * math.pi * math.e / 12.0) + 1.0


def gaussian_rdf(cov, D: float) -> float:
    """Rate-distortion function (bits) of N(0, cov) under squared error <= D."""
    if not D > 0:
        raise ValueError("distortion budget must be positive")
    lam, _ = eig_sym(cov)
    lam = np.clip(lam, 0.0, None)
    if D >= float(np.sum(lam)):
        return 0.0
    water = _water_level(np.sort(lam), D)
    active = lam > water
    return float(0.5 * np.sum(np.log2(lam[active] / water)))


def _water_level(lam_sorted: np.ndarray, D: float) -> float:
    """Level w with sum(min(w, lam)) == D for ascending ``lam_sorted``."""
    k = lam_sorted.size
    below = 0.0
    for i, lam in enumerate(lam_sorted):
        # try: the first i eigenvalues lie below the level, the rest are clipped
        w = (D - below) / (k - i)
        if w <= lam:
            return w
        below += lam
    return float(lam_sorted[-1])


def _fy(y: np.ndarray, sigma: float, delta: float) -> np.ndarray:
    """Density of x + n for x ~ N(0, sigma^2), n ~ U[-delta/2, delta/2]."""
    y = np.abs(np.asarray(y, dtype=float))
    return (special.ndtr((delta / 2 - y) / sigma) - special.ndtr((-delta / 2 - y) / sigma)) / delta


def output_entropy(sigma2: float, delta: float) -> float:
    """Differential entropy h(y) in bits of y = x + n (Gaussian x, uniform n)."""
    sigma = math.sqrt(sigma2)
    half = delta / 2

    def integrand(y):
        f = _fy(y, sigma, delta)
        return -float(special.xlogy(f, f)) * LOG2E

    edges = sorted({0.0, max(0.0, half - 8 * sigma), half, half + 8 * sigma, half + 40 * sigma})
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        out = integrate.quad(integrand, lo, hi, epsabs=1e-11, epsrel=1e-12, limit=400, full_output=1)
        if len(out) > 3:
            raise QuadratureFailure(out[3])
        total += out[0]
        err += out[1]
    if 2 * err > 1e-7:
        raise QuadratureFailure(f"quadrature error estimate {2 * err:.2e} bits too large")
    return 2.0 * total


def uniform_gaussian_channel_mi(sigma2: float, delta: float) -> float:
    """I(x; x + n) in bits for x ~ N(0, sigma2) and n ~ U[-delta/2, delta/2].

    Equals h(y) - log2(delta), which is also H(q~ | xi) for a dithered
    quantizer with step ``delta`` fed by x.
    """
    if not (sigma2 > 0 and delta > 0):
        raise ValueError("sigma2 and delta must be positive")
    return max(0.0, output_entropy(sigma2, delta) - math.log2(delta))


def gaussian_majorant_mi(sigma2: float, delta: float) -> float:
    """1/2 log2(2 pi e (delta^2/12 + sigma2)) - log2(delta)."""
    return 0.5 * math.log2(2 * math.pi * math.e * (delta**2 / 12 + sigma2)) - math.log2(delta)


def cell_log2_prob(theta, xi, delta, sigma) -> np.ndarray:
    """log2 P(q~ = k delta | xi) for the cells hit by ``theta + xi`` (vectorized).

    The input is N(0, sigma^2); the cell of k is
    theta in [k delta - delta/2 - xi, k delta + delta/2 - xi).
    """
    theta = np.asarray(theta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    k = np.floor((theta + xi) / delta + 0.5)
    lo = (k * delta - delta / 2 - xi) / sigma
    hi = (k * delta + delta / 2 - xi) / sigma
    # evaluate on the side where both CDF values are small
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    p = special.ndtr(b) - special.ndtr(a)
    return np.log2(p)


def empirical_conditional_entropy(
    sigma2: float, delta: float, samples: int, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of H(q~ | xi) in bits and its standard error."""
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(sigma2)
    theta = rng.normal(0.0, sigma, samples)
    xi = rng.uniform(-delta / 2, delta / 2, samples)
    ideal = -cell_log2_prob(theta, xi, delta, sigma)
    return float(np.mean(ideal)), float(np.std(ideal) / math.sqrt(samples))


@dataclass(frozen=True)
class GapReport:
    D: float
    rdf_bits: float
    entropy_bits: float
    cap_bound_bits: float
    slack: float

    def lines(self) -> list[str]:
        return [f"{name}: {getattr(self, name):.12g}" for name in ("D", "rdf_bits", "entropy_bits", "cap_bound_bits", "slack")]


def gap_report(theta_cov, steps, entropy_bits: float) -> GapReport:
    """Compare an H(q~|xi) estimate against RDF(D) + (r/2) log2(4 pi e/12).

    ``slack`` is positive when the entropy respects the bound.
    """
    steps = np.atleast_1d(np.asarray(steps, dtype=float))
    D = float(np.sum(steps**2) / 12.0)
    rdf = gaussian_rdf(theta_cov, D)
    cap = capacity_gap_bound(steps.size)
    return GapReport(D=D, rdf_bits=rdf, entropy_bits=entropy_bits, cap_bound_bits=cap, slack=rdf + cap - entropy_bits)
