"""GPTQ 4-bit weight container and the ``GQ4S`` weight file.

Layout of a ``k x n`` weight matrix with group size ``g``:

* ``qweight`` uint32 ``[k/8, n]`` - nibble ``i`` (bits ``4i..4i+3``) of word
  ``(w, c)`` is the code of element ``(8w + i, c)``;
* ``scales`` binary16 bit patterns ``[k/g, n]``;
* ``zeros`` uint32 ``[k/g, n/8]`` - nibble ``j`` of word ``(gr, wc)`` is the
  zero point of group ``gr``, column ``8wc + j``;
* ``perm`` optional activation-order permutation of ``0..k-1``.

An element dequantizes to ``scale * (code - zero)`` with no offset applied to
the stored zero point, rounded once to binary16.

``GQ4S`` file, all fields little-endian::

    magic  b"GQ4S"
    u32    version (1)
    u32    k, n, g
    u32    flags (bit 0: perm present)
    u32    qweight, row-major
    u16    scales, row-major raw patterns
    u32    zeros, row-major
    u32    perm[k]            (only when flag bit 0 is set)
"""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np

from qgemm_lab.errors import FormatError, PermError, RangeError, ShapeError
from qgemm_lab.f16core import Half, Half2, bits_to_f64, f64_to_bits

MAGIC = b"GQ4S"
VERSION = 1
FLAG_PERM = 1
_HEADER = struct.Struct("<4s5I")


def _as_half_bits(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == np.float16:
        return a.view(np.uint16)
    if a.dtype != np.uint16:
        raise TypeError(f"scales must be float16 or uint16 bit patterns, got {a.dtype}")
    return a


def _check_perm(perm, k: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.ndim != 1 or perm.shape[0] != k:
        raise PermError(f"perm must have length {k}")
    if not np.issubdtype(perm.dtype, np.integer):
        raise PermError("perm must be integer-valued")
    if not np.array_equal(np.sort(perm), np.arange(k)):
        raise PermError("perm is not a permutation of 0..k-1")
    return perm.astype(np.uint32)


@dataclass(frozen=True, eq=False)
class QuantizedWeight:
    k: int
    n: int
    group_size: int
    qweight: np.ndarray
    scales: np.ndarray
    zeros: np.ndarray
    perm: np.ndarray | None = None

    def __post_init__(self):
        k, n, g = self.k, self.n, self.group_size
        if k <= 0 or n <= 0 or g <= 0:
            raise ShapeError(f"dimensions must be positive: k={k} n={n} g={g}")
        if k % 8 or n % 8 or k % g:
            raise ShapeError(f"need k%8 == n%8 == k%g == 0, got k={k} n={n} g={g}")
        for name, arr, shape, dtype in (
            ("qweight", self.qweight, (k // 8, n), np.uint32),
            ("scales", self.scales, (k // g, n), np.uint16),
            ("zeros", self.zeros, (k // g, n // 8), np.uint32),
        ):
            if arr.shape != shape or arr.dtype != dtype:
                raise ShapeError(f"{name}: expected {dtype.__name__}{shape}, got {arr.dtype}{arr.shape}")
            arr.setflags(write=False)
        if self.perm is not None:
            object.__setattr__(self, "perm", _check_perm(self.perm, k))
            self.perm.setflags(write=False)

    @property
    def num_groups(self) -> int:
        return self.k // self.group_size

    def __eq__(self, other):
        if not isinstance(other, QuantizedWeight):
            return NotImplemented
        if (self.k, self.n, self.group_size) != (other.k, other.n, other.group_size):
            return False
        if (self.perm is None) != (other.perm is None):
            return False
        same = (
            np.array_equal(self.qweight, other.qweight)
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.zeros, other.zeros)
        )
        return same and (self.perm is None or np.array_equal(self.perm, other.perm))


def _pack_nibbles(codes: np.ndarray, axis: int) -> np.ndarray:
    codes = codes.astype(np.uint32)
    if axis == 0:
        parts = codes.reshape(codes.shape[0] // 8, 8, codes.shape[1])
        return np.bitwise_or.reduce(parts << (4 * np.arange(8, dtype=np.uint32))[None, :, None], axis=1)
    parts = codes.reshape(codes.shape[0], codes.shape[1] // 8, 8)
    return np.bitwise_or.reduce(parts << (4 * np.arange(8, dtype=np.uint32))[None, None, :], axis=2)


def _unpack_nibbles(words: np.ndarray, axis: int) -> np.ndarray:
    shifts = 4 * np.arange(8, dtype=np.uint32)
    if axis == 0:
        parts = (words[:, None, :] >> shifts[None, :, None]) & 0xF
        return parts.reshape(words.shape[0] * 8, words.shape[1]).astype(np.int64)
    parts = (words[:, :, None] >> shifts[None, None, :]) & 0xF
    return parts.reshape(words.shape[0], words.shape[1] * 8).astype(np.int64)


def pack(q, scales, zeros, g: int, perm=None) -> QuantizedWeight:
    """Pack codes, scales and zero points into a ``QuantizedWeight``."""
    q = np.asarray(q)
    zeros = np.asarray(zeros)
    scales = _as_half_bits(scales)
    if q.ndim != 2:
        raise ShapeError("q must be a 2-D matrix")
    k, n = q.shape
    if k == 0 or n == 0 or g <= 0 or k % 8 or n % 8 or k % g:
        raise ShapeError(f"need k%8 == n%8 == k%g == 0, got k={k} n={n} g={g}")
    if scales.shape != (k // g, n) or zeros.shape != (k // g, n):
        raise ShapeError(f"scales and zeros must be {(k // g, n)}")
    for name, codes in (("q", q), ("zeros", zeros)):
        if codes.size and (codes.min() < 0 or codes.max() > 15):
            raise RangeError(f"{name} codes must lie in [0, 15]")
    return QuantizedWeight(
        k=k,
        n=n,
        group_size=g,
        qweight=_pack_nibbles(q, axis=0),
        scales=scales.copy(),
        zeros=_pack_nibbles(zeros, axis=1),
        perm=None if perm is None else _check_perm(perm, k),
    )


def unpack(w: QuantizedWeight):
    """Inverse of :func:`pack`: ``(q, scales, zeros, perm)``."""
    perm = None if w.perm is None else w.perm.astype(np.int64)
    return _unpack_nibbles(w.qweight, 0), w.scales.copy(), _unpack_nibbles(w.zeros, 1), perm


def _code(w: QuantizedWeight, row: int, col: int) -> int:
    return (int(w.qweight[row >> 3, col]) >> (4 * (row & 7))) & 0xF


def _zero(w: QuantizedWeight, group: int, col: int) -> int:
    return (int(w.zeros[group, col >> 3]) >> (4 * (col & 7))) & 0xF


def dequant_element(w: QuantizedWeight, row: int, col: int) -> Half:
    if not (0 <= row < w.k and 0 <= col < w.n):
        raise IndexError(f"({row}, {col}) outside {w.k}x{w.n}")
    group = row // w.group_size
    s = bits_to_f64(int(w.scales[group, col]))
    return Half(f64_to_bits(s * (_code(w, row, col) - _zero(w, group, col))))


def dequant_columns(w: QuantizedWeight, col: int, k_lo: int, k_hi: int) -> Iterator[tuple[Half2, Half2]]:
    """Yield ``(B[k, col:col+2], B[k, col+2:col+4])`` as Half2 pairs for ``k_lo <= k < k_hi``."""
    if col % 4 or not 0 <= col <= w.n - 4:
        raise IndexError(f"column tile {col} invalid for n={w.n}")
    if not 0 <= k_lo <= k_hi <= w.k:
        raise IndexError(f"row range [{k_lo}, {k_hi}) invalid for k={w.k}")
    for k in range(k_lo, k_hi):
        d = [dequant_element(w, k, col + j) for j in range(4)]
        yield Half2(d[0], d[1]), Half2(d[2], d[3])


def serialize(w: QuantizedWeight, sink) -> None:
    """Write ``w`` as a GQ4S file to a path or binary stream."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            serialize(w, fh)
        return
    flags = FLAG_PERM if w.perm is not None else 0
    sink.write(_HEADER.pack(MAGIC, VERSION, w.k, w.n, w.group_size, flags))
    sink.write(w.qweight.astype("<u4").tobytes())
    sink.write(w.scales.astype("<u2").tobytes())
    sink.write(w.zeros.astype("<u4").tobytes())
    if w.perm is not None:
        sink.write(w.perm.astype("<u4").tobytes())


def to_bytes(w: QuantizedWeight) -> bytes:
    buf = io.BytesIO()
    serialize(w, buf)
    return buf.getvalue()


def _read_exact(src: BinaryIO, nbytes: int, what: str) -> bytes:
    data = src.read(nbytes)
    if len(data) != nbytes:
        raise FormatError(f"truncated file while reading {what}")
    return data


def deserialize(source) -> QuantizedWeight:
    """Read a GQ4S file from a path, bytes, or binary stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return deserialize(fh)
    if isinstance(source, (bytes, bytearray, memoryview)):
        return deserialize(io.BytesIO(bytes(source)))
    magic, version, k, n, g, flags = _HEADER.unpack(_read_exact(source, _HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if flags & ~FLAG_PERM:
        raise FormatError(f"unknown flag bits {flags:#x}")
    if k == 0 or n == 0 or g == 0 or k % 8 or n % 8 or k % g:
        raise ShapeError(f"header dimensions invalid: k={k} n={n} g={g}")

    def read(dtype, count, shape, what):
        arr = np.frombuffer(_read_exact(source, count * np.dtype(dtype).itemsize, what), dtype=dtype)
        return arr.reshape(shape).astype(dtype[1:])

    qweight = read("<u4", (k // 8) * n, (k // 8, n), "qweight")
    scales = read("<u2", (k // g) * n, (k // g, n), "scales")
    zeros = read("<u4", (k // g) * (n // 8), (k // g, n // 8), "zeros")
    perm = read("<u4", k, (k,), "perm") if flags & FLAG_PERM else None
    if source.read(1):
        raise FormatError("trailing bytes after payload")
    try:
        return QuantizedWeight(k, n, g, qweight, scales, zeros, perm)
    except PermError as exc:
        raise FormatError(f"stored perm invalid: {exc}") from exc
