"""Reference results for the GEMM kernels.

Both oracles use numpy's own float16/float32/float64 arithmetic rather than
:mod:`qgemm_lab.f16core`, so agreement with the kernels checks the software
binary16 core as well as the kernel logic.
"""
from __future__ import annotations

import numpy as np

from qgemm_lab.gptq_format import QuantizedWeight, unpack
from qgemm_lab.kernels.params import GemmProblem, TileParams, VariantFlags


def dequant_matrix(w: QuantizedWeight) -> np.ndarray:
    """Dense float16 ``K x N`` matrix of dequantized weights."""
    q, scales, zeros, _ = unpack(w)
    g = w.group_size
    s = np.repeat(scales.view(np.float16).astype(np.float64), g, axis=0)
    z = np.repeat(zeros, g, axis=0)
    return (s * (q - z)).astype(np.float16)


def effective_a(problem: GemmProblem) -> np.ndarray:
    """Activations as the kernel consumes them, with the K permutation applied."""
    a = problem.A.view(np.float16)
    if problem.B.perm is not None:
        a = a[:, problem.B.perm.astype(np.int64)]
    return a


def oracle_gemm_f32(problem: GemmProblem) -> np.ndarray:
    """binary32 GEMM, products exact, accumulated in ascending k."""
    a = effective_a(problem).astype(np.float32)
    w = dequant_matrix(problem.B).astype(np.float32)
    acc = np.zeros((problem.M, problem.N), dtype=np.float32)
    for k in range(problem.K):
        acc += a[:, k, None] * w[k][None, :]
    return acc


def _f16_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x.astype(np.float32) + y.astype(np.float32)).astype(np.float16)


def _f16_fma(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (a.astype(np.float64) * b.astype(np.float64) + c.astype(np.float64)).astype(np.float16)


def fp16_accumulate(a: np.ndarray, w: np.ndarray, tile: TileParams, smb: bool, thread_order=None, kblock_order=None):
    """fp16 GEMM with the block-structured accumulation of the kernel family.

    For each K block: every thread forms an FMA chain over its ``e`` owned k
    values; the thread partials are then added into C one by one (baseline)
    or first summed in a block accumulator that is added to C once (SMB).
    ``thread_order``/``kblock_order`` reorder those sums for bound studies.
    """
    M, K = a.shape
    N = w.shape[1]
    bk, e = tile.bk, tile.elems_per_thread
    nb_k = -(-K // bk)
    c = np.zeros((M, N), dtype=np.float16)
    for kb in kblock_order if kblock_order is not None else range(nb_k):
        off = kb * bk
        extent = min(bk, K - off)
        t_active = -(-extent // e)
        block_sum = np.zeros((M, N), dtype=np.float16)
        for t in thread_order(t_active) if thread_order is not None else range(t_active):
            part = np.zeros((M, N), dtype=np.float16)
            for j in range(t * e, min(t * e + e, extent)):
                k = off + j
                part = _f16_fma(a[:, k, None], w[k][None, :], part)
            if smb:
                block_sum = _f16_add(block_sum, part)
            else:
                c = _f16_add(c, part)
        if smb:
            c = _f16_add(c, block_sum)
    return c


def oracle_gemm_f16_canonical(problem: GemmProblem, tile: TileParams, flags: VariantFlags) -> np.ndarray:
    """Bit-exact fp16 result for a (tile, flags) configuration, as uint16 patterns.

    Only ``flags.smb`` changes the accumulation order; ``vml`` and ``ila``
    never change values.
    """
    c = fp16_accumulate(effective_a(problem), dequant_matrix(problem.B), tile, flags.smb)
    return c.view(np.uint16)
