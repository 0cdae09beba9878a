"""Shannon-Fano prefix codes over quantizer cells, with an escape for the tail.

Probabilities are turned into exact dyadic integers (numerators over
``2**PRECISION_BITS``) before cumulative sums are taken, so the constructed
code is prefix-free by construction rather than up to rounding.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from collections.abc import Iterable
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import special

from .errors import DecodeFailure, DegenerateCovariance
from .quantizer import xi_from_key, xi_key

PRECISION_BITS = 1100  # covers every positive double, subnormals included
ESCAPE_FLOOR = 1 << (PRECISION_BITS - 64)  # smallest escape probability, 2**-64
TAIL_EPS = 1e-9
SQRT1_2 = 0.7071067811865476
ESCAPE = None  # codebook symbol reserved for cells outside the support


# --- cell probabilities ------------------------------------------------------

def cell_prob(k: int, xi: float, delta: float, sigma: float) -> float:
    """P(k delta - delta/2 <= theta + xi < k delta + delta/2) for theta ~ N(0, sigma^2).

    Shared with the compiled kernel; the branch structure keeps both CDF
    values on the small side so tail cells keep full relative precision.
    """
    lo = (k * delta - 0.5 * delta - xi) / sigma
    hi = (k * delta + 0.5 * delta - xi) / sigma
    if lo >= 0.0:
        return 0.5 * (math.erfc(lo * SQRT1_2) - math.erfc(hi * SQRT1_2))
    if hi <= 0.0:
        return 0.5 * (math.erfc(-hi * SQRT1_2) - math.erfc(-lo * SQRT1_2))
    return 1.0 - 0.5 * math.erfc(-lo * SQRT1_2) - 0.5 * math.erfc(hi * SQRT1_2)


def tail_quantile(eps: float, r: int) -> float:
    """z with P(N(0,1) > z) = eps / (2 r); 0 when there are no components."""
    if r == 0:
        return 0.0
    return float(-special.ndtri(eps / (2.0 * r)))


def support_range(xi: float, delta: float, sigma: float, z: float) -> tuple[int, int]:
    """Cells kept for one component: each side's tail beyond them is below the z quantile."""
    hi = math.ceil((z * sigma + xi - 0.5 * delta) / delta)
    lo = math.floor((xi + 0.5 * delta - z * sigma) / delta)
    return min(lo, 0), max(hi, 0)


def shannon_fano_length(p: float) -> int:
    """ceil(log2(1/p)) evaluated exactly from the binary exponent of p."""
    _, e = math.frexp(p)
    return max(1 - e, 1)


@dataclass(frozen=True)
class CellPmf:
    support: tuple[tuple[tuple[int, ...], float], ...]
    tail_mass: float
    eps: float = TAIL_EPS

    def probabilities(self) -> list[float]:
        return [p for _, p in self.support]

    def entropy_bits(self) -> float:
        return float(-sum(p * math.log2(p) for _, p in self.support))


def pmf_from_probabilities(probs: Iterable[float], eps: float = TAIL_EPS) -> CellPmf:
    """CellPmf over symbols (0,), (1,), ... with the given descending probabilities."""
    probs = [float(p) for p in probs]
    if any(p <= 0 for p in probs):
        raise ValueError("probabilities must be strictly positive")
    if any(a < b for a, b in zip(probs, probs[1:])):
        raise ValueError("probabilities must be sorted in nonincreasing order")
    tail = max(0.0, 1.0 - math.fsum(probs))
    return CellPmf(tuple(((i,), p) for i, p in enumerate(probs)), tail, max(eps, tail))


def _sort_support(entries) -> tuple:
    return tuple(sorted(entries, key=lambda cp: (-cp[1], cp[0])))


def conditional_pmf(theta_cov, dither_value, steps, eps: float = TAIL_EPS) -> CellPmf:
    """Model P(q~ | xi) of the quantizer cells for a Gaussian innovation.

    Components are treated as independent with the marginal variances of
    ``theta_cov``; this is exact when the covariance is diagonal.
    """
    cov = np.atleast_2d(np.asarray(theta_cov, dtype=float))
    xi = np.atleast_1d(np.asarray(dither_value, dtype=float))
    steps = np.atleast_1d(np.asarray(steps, dtype=float))
    r = steps.size
    if not (0 < eps <= 1e-6):
        raise ValueError("eps must lie in (0, 1e-6]")
    if cov.shape != (r, r) or xi.size != r:
        raise ValueError("theta_cov, dither and steps disagree in dimension")
    variances = np.diag(cov)
    if np.any(variances <= 0):
        raise DegenerateCovariance("innovation variance must be positive in every component")
    sigmas = [math.sqrt(v) for v in variances]
    z = tail_quantile(eps, r)

    per_component = []
    log_kept = 0.0
    for x, d, s in zip(xi, steps, sigmas):
        lo, hi = support_range(float(x), float(d), s, z)
        cells = [(k, cell_prob(k, float(x), float(d), s)) for k in range(lo, hi + 1)]
        per_component.append(cells)
        lower_tail = 0.5 * math.erfc(-((lo * d - 0.5 * d - x) / s) * SQRT1_2)
        upper_tail = 0.5 * math.erfc(((hi * d + 0.5 * d - x) / s) * SQRT1_2)
        log_kept += math.log1p(-(lower_tail + upper_tail))

    entries = []
    for combo in product(*per_component):
        p = 1.0
        for _, pk in combo:
            p *= pk
        if p > 0.0:
            entries.append((tuple(k for k, _ in combo), p))
    return CellPmf(_sort_support(entries), -math.expm1(log_kept), eps)


def joint_cell_prob(cell, xi, steps, sigmas) -> float:
    p = 1.0
    for k, x, d, s in zip(cell, xi, steps, sigmas):
        p *= cell_prob(int(k), float(x), float(d), float(s))
    return p


# --- Shannon-Fano construction -----------------------------------------------

@dataclass(frozen=True)
class Codeword:
    bits: str

    @property
    def length(self) -> int:
        return len(self.bits)


class Codebook:
    """Prefix-free map between cells and bit strings.

    ``ESCAPE`` (``None``) is present whenever the pmf leaves probability mass
    outside its support.
    """

    def __init__(self, words: dict, probabilities: dict):
        self.words = words
        self.probabilities = probabilities
        self._decode = {w.bits: cell for cell, w in words.items()}
        self.max_length = max(w.length for w in words.values())

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, cell) -> bool:
        return cell in self.words and cell is not ESCAPE

    @property
    def has_escape(self) -> bool:
        return ESCAPE in self.words

    def lengths(self) -> dict:
        return {cell: w.length for cell, w in self.words.items()}

    def kraft_sum(self) -> float:
        return math.fsum(2.0 ** -w.length for w in self.words.values())

    def expected_length(self) -> float:
        return math.fsum(self.probabilities[c] * w.length for c, w in self.words.items())

    def is_prefix_free(self) -> bool:
        words = sorted(w.bits for w in self.words.values())
        return all(not b.startswith(a) for a, b in zip(words, words[1:]))

    def encode(self, cell) -> Codeword:
        cell = tuple(int(k) for k in cell)
        if cell in self.words:
            return self.words[cell]
        if not self.has_escape:
            raise KeyError(f"cell {cell} is outside the support and the book has no escape")
        return Codeword(self.words[ESCAPE].bits + "".join(elias_gamma(zigzag(k) + 1) for k in cell))

    def decode_prefix(self, bits: str, r: int) -> tuple[tuple[int, ...], int]:
        """Decode the codeword at the start of ``bits``; returns (cell, bits used)."""
        for n in range(1, min(len(bits), self.max_length) + 1):
            cell = self._decode.get(bits[:n], _MISSING)
            if cell is _MISSING:
                continue
            if cell is not ESCAPE:
                return cell, n
            pos = n
            out = []
            for _ in range(r):
                value, used = read_elias_gamma(bits, pos)
                out.append(unzigzag(value - 1))
                pos += used
            return tuple(out), pos
        raise DecodeFailure(f"no codeword matches the bit stream {bits[:self.max_length]!r}")

    def decode(self, bits: str, r: int | None = None):
        if not bits:
            raise DecodeFailure("empty bit stream")
        if r is None:
            r = len(next(c for c in self.words if c is not ESCAPE))
        cell, used = self.decode_prefix(bits, r)
        if used != len(bits):
            raise DecodeFailure(f"{len(bits) - used} trailing bits after the codeword")
        return cell


_MISSING = object()


def _dyadic(p: float) -> int:
    num, den = float(p).as_integer_ratio()
    return num << (PRECISION_BITS - den.bit_length() + 1)


def build_shannon_fano(pmf: CellPmf) -> Codebook:
    """Codeword i = first ceil(log2 1/p_i) bits of the binary expansion of sum_{k<i} p_k.

    The mass the pmf leaves uncovered goes to an escape symbol.  When that mass
    is below 2**-64 the escape borrows from an entry's slack instead, so a
    book lacks an escape only if its lengths already fill the Kraft sum.
    """
    one = 1 << PRECISION_BITS
    symbols = [cell for cell, _ in pmf.support]
    nums = [_dyadic(p) for _, p in pmf.support]
    lengths = [max(PRECISION_BITS + 1 - num.bit_length(), 1) for num in nums]
    # any slack above 2**-l_i can be moved between entries without touching a length
    slack = [num - (1 << (PRECISION_BITS - l)) for num, l in zip(nums, lengths)]
    donor = max(range(len(nums)), key=slack.__getitem__)
    remainder = one - sum(nums)
    if remainder < 0:
        if slack[donor] < -remainder:
            raise ValueError("pmf exceeds one by more than rounding can explain")
        nums[donor] += remainder
        slack[donor] += remainder
        remainder = 0
    if remainder < ESCAPE_FLOOR and slack[donor] >= ESCAPE_FLOOR - remainder:
        nums[donor] -= ESCAPE_FLOOR - remainder
        remainder = ESCAPE_FLOOR
    if remainder > 0:
        symbols.append(ESCAPE)
        nums.append(remainder)
        lengths.append(PRECISION_BITS + 1 - remainder.bit_length())
        order = sorted(range(len(nums)), key=lambda i: lengths[i])
        symbols = [symbols[i] for i in order]
        nums = [nums[i] for i in order]
        lengths = [lengths[i] for i in order]

    words, probs = {}, {}
    cumulative = 0
    for cell, num, length in zip(symbols, nums, lengths):
        words[cell] = Codeword(format(cumulative >> (PRECISION_BITS - length), f"0{length}b"))
        probs[cell] = num / one
        cumulative += num
    return Codebook(words, probs)


# --- self-delimiting integers ------------------------------------------------

def zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


def unzigzag(z: int) -> int:
    return z // 2 if z % 2 == 0 else -(z + 1) // 2


def elias_gamma(n: int) -> str:
    if n < 1:
        raise ValueError("Elias gamma codes positive integers")
    body = format(n, "b")
    return "0" * (len(body) - 1) + body


def read_elias_gamma(bits: str, pos: int) -> tuple[int, int]:
    zeros = 0
    while pos + zeros < len(bits) and bits[pos + zeros] == "0":
        zeros += 1
    end = pos + 2 * zeros + 1
    if end > len(bits):
        raise DecodeFailure("truncated escape sequence")
    return int(bits[pos + zeros:end], 2), end - pos


def encode(cell, codebook: Codebook) -> Codeword:
    return codebook.encode(cell)


def decode(bits: str, codebook: Codebook):
    return codebook.decode(bits)


# --- per-step codebooks ------------------------------------------------------

class CodebookCache:
    """Codebooks for the loop's innovation model, keyed by the quantized dither.

    The dither is snapped to a ``2**-20 * Delta`` grid before the pmf is
    built, so a book is a pure function of its key and both ends of the link
    reproduce it from the shared dither alone.
    """

    def __init__(self, theta_cov, steps, eps: float = TAIL_EPS, maxsize: int = 4096):
        self.theta_cov = np.atleast_2d(np.asarray(theta_cov, dtype=float))
        self.steps = tuple(float(d) for d in np.atleast_1d(steps))
        self.eps = eps
        self.maxsize = maxsize
        self._books: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0

    def snap(self, xi) -> tuple[float, ...]:
        return tuple(xi_from_key(xi_key(x, d), d) for x, d in zip(xi, self.steps))

    def book(self, xi) -> Codebook:
        key = tuple(xi_key(x, d) for x, d in zip(xi, self.steps))
        book = self._books.get(key)
        if book is not None:
            self.hits += 1
            self._books.move_to_end(key)
            return book
        self.misses += 1
        snapped = tuple(xi_from_key(k, d) for k, d in zip(key, self.steps))
        book = build_shannon_fano(conditional_pmf(self.theta_cov, snapped, self.steps, self.eps))
        self._books[key] = book
        if len(self._books) > self.maxsize:
            self._books.popitem(last=False)
        return book


# --- audit trace -------------------------------------------------------------

def bits_to_hex(bits: str) -> str:
    if not bits:
        return ""
    return format(int(bits, 2), f"0{(len(bits) + 3) // 4}x")


def hex_to_bits(text: str, length: int) -> str:
    if length == 0:
        return ""
    return format(int(text, 16), f"0{length}b")


def write_trace(path, rows) -> None:
    """Rows of (step, codeword bits) -> CSV with columns step,l_t,bits_hex."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_t", "bits_hex"])
        for step, bits in rows:
            writer.writerow([step, len(bits), bits_to_hex(bits)])


def read_trace(path) -> list[tuple[int, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(int(row["step"]), hex_to_bits(row["bits_hex"], int(row["l_t"]))) for row in reader]
