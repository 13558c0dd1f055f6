"""IEEE-754 binary32 kernels and boundary probes.

Everything on the reproduction path runs in ``numpy.float32``; numpy
rounds each elementwise operation to binary32 (round-to-nearest-even),
so no extended-precision intermediates leak in.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "Finfo",
    "finfo",
    "bits_to_f32",
    "f32_to_bits",
    "parse_decimal_to_f32",
    "round_to_f32",
    "sigmoid32",
    "log32_shifted",
    "ulp_distance",
]

_MANT_BITS = 23
_EMIN = -126
_EMAX = 127

_DECIMAL_RE = re.compile(
    r"""^\s*(?P<sign>[-+])?
    (?:
        (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
      | (?P<inf>inf(?:inity)?)
      | (?P<nan>nan)
    )\s*$""",
    re.VERBOSE | re.IGNORECASE,
)


def bits_to_f32(bits: int) -> np.float32:
    return np.float32(struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0])


def f32_to_bits(x) -> int:
    return struct.unpack("<I", struct.pack("<f", np.float32(x)))[0]


@dataclass(frozen=True)
class Finfo:
    """binary32 limits, derived from bit patterns."""

    resolution: np.float32
    min: np.float32
    max: np.float32
    eps: np.float32
    tiny: np.float32
    smallest_subnormal: np.float32

    def __str__(self) -> str:
        return (
            f"finfo(resolution={float(self.resolution):g}, min={float(self.min):g}, "
            f"max={float(self.max):g}, eps={float(self.eps):g}, "
            f"tiny={float(self.tiny):g}, dtype=float32)"
        )


def finfo() -> Finfo:
    one = 0x3F800000
    # gap between 1.0 and its binary32 successor
    eps = bits_to_f32(one + 1) - bits_to_f32(one)
    largest = bits_to_f32(0x7F7FFFFF)
    precision = int(-math.log10(float(eps)))
    return Finfo(
        resolution=np.float32(10.0 ** -precision),
        min=-largest,
        max=largest,
        eps=np.float32(eps),
        tiny=bits_to_f32(0x00800000),
        smallest_subnormal=bits_to_f32(0x00000001),
    )


def round_to_f32(q: Fraction) -> np.float32:
    """Round an exact rational to binary32, nearest-even, with gradual underflow."""
    if q == 0:
        return np.float32(0.0)
    sign = -1.0 if q < 0 else 1.0
    q = abs(q)
    num, den = q.numerator, q.denominator
    # floor(log2 q): start from the bit-length estimate and correct by one.
    e = num.bit_length() - den.bit_length()
    if Fraction(2) ** e > q:
        e -= 1
    e_eff = max(e, _EMIN)
    quantum = Fraction(2) ** (e_eff - _MANT_BITS)
    scaled = q / quantum
    m = scaled.numerator // scaled.denominator
    rem = scaled - m
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and m % 2 == 1):
        m += 1
    if m == 0:
        return np.float32(sign * 0.0)
    # m < 2**25 and the exponent is in binary64 normal range, so this is exact.
    value = math.ldexp(m, e_eff - _MANT_BITS)
    if value >= 2.0 ** (_EMAX + 1):
        return np.float32(sign * math.inf)
    return np.float32(sign * value)


def parse_decimal_to_f32(text: str) -> np.float32:
    """Convert a decimal literal straight to binary32.

    The literal is read as an exact rational, so there is no intermediate
    binary64 rounding. Magnitudes below half the smallest subnormal
    flush to (signed) zero; ``7.1e-46`` becomes 2**-149, ``7.0e-46`` becomes 0.
    """
    m = _DECIMAL_RE.match(text)
    if m is None:
        raise ValueError(f"malformed decimal literal: {text!r}")
    neg = m.group("sign") == "-"
    if m.group("nan"):
        return np.float32(math.nan)
    if m.group("inf"):
        return np.float32(-math.inf if neg else math.inf)
    q = Fraction(m.group("num"))
    r = round_to_f32(q)
    return np.float32(-r) if neg else r


def sigmoid32(z):
    """Logistic function with exp(-z) rounded to binary32 before the divide.

    exp(89) ~ 4.49e38 exceeds the binary32 max, so the reciprocal saturates
    to exactly 0 at z = -89; that saturation is intended.
    """
    z = np.asarray(z, dtype=np.float32)
    with np.errstate(over="ignore"):
        e = np.exp(-z.astype(np.float64)).astype(np.float32)
    one = np.float32(1.0)
    out = one / (one + e)
    return out if out.ndim else np.float32(out)


def log32_shifted(y, eps=np.float32(0.0)):
    """``log(y + eps)`` in binary32. Returns -inf when ``y + eps`` rounds to zero."""
    y = np.asarray(y, dtype=np.float32)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(y + np.float32(eps))
    return out if out.ndim else np.float32(out)


def ulp_distance(a, b) -> int:
    """Number of binary32 values between ``a`` and ``b`` (finite, same sign convention)."""

    def ordered(x):
        bits = f32_to_bits(x)
        return bits if bits < 0x80000000 else 0x80000000 - bits

    return abs(ordered(a) - ordered(b))
