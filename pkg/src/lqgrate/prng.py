"""Counter-based SplitMix64 generator.

Output ``(key, t, lane)`` is ``mix64(key + (t * 2**20 + lane + 1) * GOLDEN)``
modulo 2**64: any draw can be regenerated from its coordinates alone, which is
how the encoder and decoder share the dither without communicating.  The
compiled kernel implements the same arithmetic bit for bit.
"""

from __future__ import annotations

import math

MASK64 = 0xFFFF_FFFF_FFFF_FFFF
GOLDEN = 0x9E37_79B9_7F4A_7C15
MIX1 = 0xBF58_476D_1CE4_E5B9
MIX2 = 0x94D0_49BB_1331_11EB
LANE_BITS = 20
TWO_M53 = 2.0**-53

STREAM_DITHER = 0x6469_7468_6572_0001
STREAM_NOISE = 0x6E6F_6973_6500_0002
STREAM_INIT = 0x696E_6974_0000_0003

# normal pair j, polar attempt a, coordinate b -> lane (j << 8) | (a << 1) | b
MAX_POLAR_ATTEMPTS = 128


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int, trial: int = 0) -> int:
    """Key of an independent stream for one (seed, purpose, trial) triple."""
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    base = mix64((seed ^ stream) & MASK64)
    return mix64((base + (trial + 1) * GOLDEN) & MASK64)


def draw(key: int, t: int, lane: int) -> int:
    return mix64((key + ((t << LANE_BITS) + lane + 1) * GOLDEN) & MASK64)


def uniform(key: int, t: int, lane: int) -> float:
    """Uniform on [0, 1) with 53 random mantissa bits."""
    return (draw(key, t, lane) >> 11) * TWO_M53


def normal_pair(key: int, t: int, j: int) -> tuple[float, float]:
    """Two independent N(0, 1) draws by the Marsaglia polar method."""
    for a in range(MAX_POLAR_ATTEMPTS):
        lane = (j << 8) | (a << 1)
        v1 = 2.0 * uniform(key, t, lane) - 1.0
        v2 = 2.0 * uniform(key, t, lane | 1) - 1.0
        s = v1 * v1 + v2 * v2
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return v1 * f, v2 * f
    raise RuntimeError("polar method rejected every attempt")  # probability ~ 0.215**128


def normals(key: int, t: int, n: int) -> list[float]:
    out: list[float] = []
    j = 0
    while len(out) < n:
        out.extend(normal_pair(key, t, j))
        j += 1
    return out[:n]


class CounterRNG:
    """Convenience wrapper over one stream key."""

    def __init__(self, seed: int, stream: int, trial: int = 0):
        self.key = stream_key(seed, stream, trial)

    def uniform(self, t: int, lane: int) -> float:
        return uniform(self.key, t, lane)

    def normals(self, t: int, n: int) -> list[float]:
        return normals(self.key, t, n)
