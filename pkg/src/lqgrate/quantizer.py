"""Uniform scalar quantizer and its subtractively dithered form."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import prng
from .errors import LengthMismatch, NonFiniteInput

XI_KEY_BITS = 20


def quantize_uniform(x: float, delta: float) -> tuple[int, float]:
    """Cell index i and value i*delta for i*delta - delta/2 <= x < i*delta + delta/2."""
    if not math.isfinite(x):
        raise NonFiniteInput(f"cannot quantize {x!r}")
    if not delta > 0:
        raise ValueError("step size must be positive")
    i = math.floor(x / delta + 0.5)
    return i, i * delta


def dither_value(key: int, t: int, i: int, delta: float) -> float:
    """Component i of the dither at step t, uniform on [-delta/2, delta/2)."""
    return (prng.uniform(key, t, i) - 0.5) * delta


class DitherStream:
    """Shared dither sequence; position counts plant steps."""

    def __init__(self, seed: int, step_sizes, trial: int = 0, position: int = 0):
        self.seed = int(seed)
        self.step_sizes = tuple(float(d) for d in np.atleast_1d(step_sizes))
        if not all(d > 0 for d in self.step_sizes):
            raise ValueError("step sizes must be positive")
        self.trial = trial
        self.position = position
        self.key = prng.stream_key(self.seed, prng.STREAM_DITHER, trial)

    @property
    def r(self) -> int:
        return len(self.step_sizes)

    def values_at(self, t: int) -> tuple[float, ...]:
        return tuple(dither_value(self.key, t, i, d) for i, d in enumerate(self.step_sizes))

    def peek(self) -> tuple[float, ...]:
        return self.values_at(self.position)

    def advance(self) -> tuple[float, ...]:
        xi = self.values_at(self.position)
        self.position += 1
        return xi


@dataclass(frozen=True)
class QuantizerOutput:
    cell_indices: tuple[int, ...]
    reconstructed: tuple[float, ...]
    dither: tuple[float, ...]


def dithered(theta_i: float, xi_i: float, delta: float) -> tuple[int, float]:
    """(k, q): q~ = k delta = Q(theta + xi), reconstruction q = k delta - xi."""
    k, value = quantize_uniform(theta_i + xi_i, delta)
    return k, value - xi_i


def quantize_dithered(theta, dither: DitherStream) -> QuantizerOutput:
    theta = [float(v) for v in np.atleast_1d(theta)]
    if len(theta) != dither.r:
        raise LengthMismatch(f"theta has {len(theta)} components, dither has {dither.r}")
    xi = dither.advance()
    cells, recon = [], []
    for th, x, d in zip(theta, xi, dither.step_sizes):
        k, q = dithered(th, x, d)
        cells.append(k)
        recon.append(q)
    return QuantizerOutput(tuple(cells), tuple(recon), xi)


def xi_key(xi: float, delta: float) -> int:
    """Index of ``xi`` on the 2**-20 * delta grid used to cache codebooks."""
    return math.floor(xi / delta * (1 << XI_KEY_BITS) + 0.5)


def xi_from_key(key: int, delta: float) -> float:
    return key * delta / (1 << XI_KEY_BITS)
