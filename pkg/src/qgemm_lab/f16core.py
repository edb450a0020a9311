"""Bit-exact IEEE 754 binary16 arithmetic.

A binary16 value is carried as its raw 16-bit pattern::

    bit 15      sign
    bits 14-10  biased exponent (bias 15; 0 = zero/subnormal, 31 = inf/NaN)
    bits 9-0    significand

``Half2`` packs two patterns in one 32-bit word, ``lo`` in bits 0-15 and
``hi`` in bits 16-31, the layout of a ``half2`` register.

Semantics shared by every operation:

* rounding is round-to-nearest-even, always;
* subnormals are produced and consumed, never flushed;
* every NaN result is the canonical quiet NaN ``0x7E00``;
* ``h_fma(a, b, c)`` evaluates ``a*b + c`` in binary64 (the product of two
  binary16 values is exact there) and rounds that binary64 value once to
  binary16. This is the normative definition, bit-exact on every platform.
  A double rounding could in principle separate it from a true fused
  single rounding; for binary16 operands the binary64 sum is exact in all
  but extreme-exponent-gap cases, where both roundings agree anyway.

``h_add``/``h_mul`` round the exact sum/product once. Adding or
multiplying two binary16 values in binary64 is exact, so this is the same
as the binary32 evaluate-then-narrow realization.

The ``*_bits`` functions work on plain integers and are numba-compiled
when available; the kernels call them directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from qgemm_lab._jit import njit

CANONICAL_NAN = 0x7E00
POS_INF = 0x7C00
NEG_INF = 0xFC00
MAX_FINITE = 65504.0

_MIN_NORMAL = 6.103515625e-05  # 2**-14
_OVERFLOW = 65520.0  # RNE midpoint between 65504 and 2**16


@njit
def _round_half_even(y):
    # y >= 0 and < 2**53, so the split below is exact
    fl = math.floor(y)
    n = int(fl)
    d = y - fl
    if d > 0.5 or (d == 0.5 and (n & 1) == 1):
        n += 1
    return n


@njit
def f64_to_bits(x):
    """Round a binary64 value to the nearest binary16 pattern (ties to even)."""
    if x != x:
        return CANONICAL_NAN
    sign = 0
    if x < 0.0 or (x == 0.0 and math.copysign(1.0, x) < 0.0):
        sign = 0x8000
    a = abs(x)
    if a >= _OVERFLOW:
        return sign | POS_INF
    if a < _MIN_NORMAL:
        # subnormal grid has spacing 2**-24; a carry to 1024 yields the min normal
        return sign | _round_half_even(a * 16777216.0)
    m, e = math.frexp(a)
    r = _round_half_even(m * 2048.0)
    exp = e - 1
    if r == 2048:
        r = 1024
        exp += 1
    return sign | ((exp + 15) << 10) | (r - 1024)


@njit
def bits_to_f64(h):
    """Exact value of a binary16 pattern."""
    h = int(h) & 0xFFFF
    exp = (h >> 10) & 0x1F
    frac = h & 0x3FF
    if exp == 0:
        v = math.ldexp(float(frac), -24)
    elif exp == 31:
        v = math.inf if frac == 0 else math.nan
    else:
        v = math.ldexp(float(frac | 0x400), exp - 25)
    if h & 0x8000:
        return -v
    return v


@njit
def add_bits(a, b):
    return f64_to_bits(bits_to_f64(a) + bits_to_f64(b))


@njit
def mul_bits(a, b):
    return f64_to_bits(bits_to_f64(a) * bits_to_f64(b))


@njit
def fma_bits(a, b, c):
    return f64_to_bits(bits_to_f64(a) * bits_to_f64(b) + bits_to_f64(c))


def f32_to_bits(x) -> int:
    """Round a binary32 value to binary16. Python floats are narrowed to binary32 first."""
    return f64_to_bits(float(np.float32(x)))


def bits_to_f32(h: int) -> np.float32:
    return np.float32(bits_to_f64(h))


@dataclass(frozen=True, slots=True)
class Half:
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= 0xFFFF:
            raise ValueError(f"not a 16-bit pattern: {self.bits:#x}")

    @classmethod
    def from_float(cls, x) -> Half:
        return cls(f32_to_bits(x))

    def __float__(self) -> float:
        return bits_to_f64(self.bits)

    def is_nan(self) -> bool:
        return (self.bits & 0x7C00) == 0x7C00 and (self.bits & 0x3FF) != 0

    def __repr__(self) -> str:
        return f"Half({self.bits:#06x}={float(self)!r})"


@dataclass(frozen=True, slots=True)
class Half2:
    lo: Half
    hi: Half

    @property
    def bits(self) -> int:
        return (self.hi.bits << 16) | self.lo.bits

    @classmethod
    def from_bits(cls, word: int) -> Half2:
        if not 0 <= word <= 0xFFFFFFFF:
            raise ValueError(f"not a 32-bit pattern: {word:#x}")
        return cls(Half(word & 0xFFFF), Half(word >> 16))

    def __iter__(self):
        yield self.lo
        yield self.hi


def f32_to_f16(x) -> Half:
    return Half(f32_to_bits(x))


def f16_to_f32(h: Half) -> np.float32:
    return bits_to_f32(h.bits)


def h_add(a: Half, b: Half) -> Half:
    return Half(add_bits(a.bits, b.bits))


def h_mul(a: Half, b: Half) -> Half:
    return Half(mul_bits(a.bits, b.bits))


def h_fma(a: Half, b: Half, c: Half) -> Half:
    return Half(fma_bits(a.bits, b.bits, c.bits))


def h2_add(a: Half2, b: Half2) -> Half2:
    return Half2(h_add(a.lo, b.lo), h_add(a.hi, b.hi))


def h2_fma(a: Half2, b: Half2, c: Half2) -> Half2:
    return Half2(h_fma(a.lo, b.lo, c.lo), h_fma(a.hi, b.hi, c.hi))


def low2half(v: Half2) -> Half:
    return v.lo


def high2half(v: Half2) -> Half:
    return v.hi


def halves2half2(lo: Half, hi: Half) -> Half2:
    return Half2(lo, hi)


def make_half2(x, y) -> Half2:
    return Half2(f32_to_f16(x), f32_to_f16(y))


@njit
def add_array(a, b):
    out = np.empty(a.shape[0], dtype=np.uint16)
    for i in range(a.shape[0]):
        out[i] = add_bits(a[i], b[i])
    return out


@njit
def mul_array(a, b):
    out = np.empty(a.shape[0], dtype=np.uint16)
    for i in range(a.shape[0]):
        out[i] = mul_bits(a[i], b[i])
    return out


@njit
def fma_array(a, b, c):
    out = np.empty(a.shape[0], dtype=np.uint16)
    for i in range(a.shape[0]):
        out[i] = fma_bits(a[i], b[i], c[i])
    return out


@njit
def f64_array_to_bits(x):
    out = np.empty(x.shape[0], dtype=np.uint16)
    for i in range(x.shape[0]):
        out[i] = f64_to_bits(x[i])
    return out
