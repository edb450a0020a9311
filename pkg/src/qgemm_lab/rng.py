"""Seeded test-data generator, reproducible across languages.

Raw stream: SplitMix64. Output ``i`` (1-based) of seed ``s`` is the mix of
``s + i * 0x9E3779B97F4A7C15 (mod 2**64)``.

Derived values from a raw word ``x``:

* activation: ``u = x >> 40``; ``f32_to_f16(u / 2**23 - 1)``, in ``[-1, 1]``;
* code / zero: ``x >> 60``, in ``[0, 15]``;
* scale: ``u = x >> 40``; ``f32_to_f16(float32(2 ** (-6 + 3 * u / 2**24)))``;
* perm of ``n``: Fisher-Yates, ``for i = n-1 .. 1: j = draw % (i + 1); swap(i, j)``.

A problem draws five sub-seeds from its master seed, one per stream, in the
order activations, codes, scales, zeros, perm.
"""
from __future__ import annotations

import numpy as np

from qgemm_lab.errors import ShapeError
from qgemm_lab.gptq_format import pack
from qgemm_lab.kernels.params import GemmProblem

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1

KINDS = ("raw", "activation", "code", "scale", "perm")
PERM_MODES = ("none", "identity", "reversed", "seeded-shuffle")


class SplitMix64:
    """Scalar reference generator."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK64
        z = ((z ^ (z >> 27)) * MIX2) & MASK64
        return z ^ (z >> 31)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of the stream as uint64 (vectorized)."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + np.arange(1, count + 1, dtype=np.uint64) * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def _fisher_yates(seed: int, n: int) -> np.ndarray:
    perm = np.arange(n, dtype=np.int64)
    draws = splitmix64(seed, max(n - 1, 0))
    for idx, i in enumerate(range(n - 1, 0, -1)):
        j = int(draws[idx]) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def gen_random(seed: int, count: int, kind: str) -> np.ndarray:
    if kind == "perm":
        return _fisher_yates(seed, count)
    raw = splitmix64(seed, count)
    if kind == "raw":
        return raw
    if kind == "code":
        return (raw >> np.uint64(60)).astype(np.int64)
    u = (raw >> np.uint64(40)).astype(np.float64)
    if kind == "activation":
        return (u / 2.0**23 - 1.0).astype(np.float32).astype(np.float16)
    if kind == "scale":
        return np.exp2(-6.0 + 3.0 * (u / 2.0**24)).astype(np.float32).astype(np.float16)
    raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


def make_perm(mode: str, seed: int, k: int) -> np.ndarray | None:
    if mode == "none":
        return None
    if mode == "identity":
        return np.arange(k)
    if mode == "reversed":
        return np.arange(k)[::-1].copy()
    if mode == "seeded-shuffle":
        return gen_random(seed, k, "perm")
    raise ValueError(f"unknown perm mode {mode!r}; expected one of {PERM_MODES}")


def make_problem(seed: int, M: int, K: int, N: int, g: int, perm_mode: str = "none") -> GemmProblem:
    s_act, s_code, s_scale, s_zero, s_perm = (int(x) for x in splitmix64(seed, 5))
    if g <= 0:
        raise ShapeError(f"group size must be positive, got {g}")
    a = gen_random(s_act, M * K, "activation").reshape(M, K)
    q = gen_random(s_code, K * N, "code").reshape(K, N)
    scales = gen_random(s_scale, (K // g) * N, "scale").reshape(K // g, N)
    zeros = gen_random(s_zero, (K // g) * N, "code").reshape(K // g, N)
    w = pack(q, scales, zeros, g, perm=make_perm(perm_mode, s_perm, K))
    return GemmProblem(a, w)
