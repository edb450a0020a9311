"""Error bounds for fp16 block-structured accumulation against the binary32 oracle.

``brute_force_bound`` replays the fp16 accumulation structure of the kernel
family (FMA chains per thread, then per-thread partials added in sequence,
with or without a block-level shared sum) under the canonical order and
under seeded random reorderings of the thread partials and K blocks, and
returns the worst ``|C - oracle_f32|`` observed.

``running_error_bound`` is a rigorous a-posteriori bound for one order:
every rounding to binary16 contributes at most ``2**-11 * |result| + 2**-25``
(the latter covers the subnormal range), every binary32 oracle addition at
most ``2**-24 * |result| + 2**-150``, and all of them add up linearly
because each rounded quantity enters the final sum with coefficient one.
"""
from __future__ import annotations

import numpy as np

from qgemm_lab.kernels.oracles import dequant_matrix, effective_a, fp16_accumulate, oracle_gemm_f32
from qgemm_lab.kernels.params import GemmProblem, TileParams
from qgemm_lab.rng import gen_random, make_problem

U16 = 2.0**-11
SUB16 = 2.0**-25

# Frozen numerical-correctness bound for the 4x512x64, g=128 acceptance problems.
ACCEPTANCE_SHAPE = (4, 512, 64, 128)
ACCEPTANCE_SEEDS = (0, 1, 2)
ACCEPTANCE_TILE = TileParams(threads=64, elems_per_thread=2, m_count=4)
BRUTE_FORCE_ORDERS = 32
# worst observed |C - oracle_f32| over both accumulation structures x 33 orders x 3 seeds
ACCEPTANCE_WORST_OBSERVED = 0.10249519348144531
ACCEPTANCE_BOUND = 0.109375  # 14 * 2**-7


def brute_force_bound(problem: GemmProblem, tile: TileParams, n_orders: int = BRUTE_FORCE_ORDERS, seed: int = 0) -> float:
    a = effective_a(problem)
    w = dequant_matrix(problem.B)
    ref = oracle_gemm_f32(problem).astype(np.float64)
    nb_k = -(-problem.K // tile.bk)
    worst = 0.0
    for smb in (False, True):
        for r in range(n_orders + 1):
            if r == 0:
                t_order = k_order = None
            else:
                sub = seed * 1_000_003 + r
                k_order = gen_random(2 * sub, nb_k, "perm")
                t_order = lambda n, s=2 * sub + 1: gen_random(s, n, "perm")  # noqa: E731
            c = fp16_accumulate(a, w, tile, smb, thread_order=t_order, kblock_order=k_order)
            worst = max(worst, float(np.max(np.abs(c.astype(np.float64) - ref))))
    return worst


def running_error_bound(problem: GemmProblem, tile: TileParams, smb: bool) -> np.ndarray:
    """Elementwise rigorous bound on ``|C_fp16 - oracle_f32|`` for the canonical order."""
    a = effective_a(problem).astype(np.float64)
    w = dequant_matrix(problem.B).astype(np.float64)
    M, K = a.shape
    N = w.shape[1]
    bk, e = tile.bk, tile.elems_per_thread
    c = np.zeros((M, N), dtype=np.float16)
    bound = np.zeros((M, N))

    def add(x, y):
        r = (x.astype(np.float32) + y.astype(np.float32)).astype(np.float16)
        return r, U16 * np.abs(r.astype(np.float64)) + SUB16

    for off in range(0, K, bk):
        extent = min(bk, K - off)
        block = np.zeros((M, N), dtype=np.float16)
        for t in range(-(-extent // e)):
            part = np.zeros((M, N), dtype=np.float16)
            for j in range(t * e, min(t * e + e, extent)):
                k = off + j
                exact = a[:, k, None] * w[k][None, :] + part.astype(np.float64)
                part = exact.astype(np.float16)
                # binary64 rounding of the FMA's sum is covered by a 2**-52 relative term
                bound += U16 * np.abs(part.astype(np.float64)) + SUB16 + 2.0**-52 * np.abs(exact)
            if smb:
                block, err = add(block, part)
            else:
                c, err = add(c, part)
            bound += err
        if smb:
            c, err = add(c, block)
            bound += err

    # binary32 oracle rounding, accumulated in ascending k
    acc = np.zeros((M, N), dtype=np.float32)
    for k in range(K):
        acc = acc + (a[:, k, None] * w[k][None, :]).astype(np.float32)
        bound += 2.0**-24 * np.abs(acc.astype(np.float64)) + 2.0**-150
    return bound


def acceptance_problems():
    M, K, N, g = ACCEPTANCE_SHAPE
    return [make_problem(s, M, K, N, g) for s in ACCEPTANCE_SEEDS]


def compute_acceptance_bound() -> tuple[float, float]:
    """``(worst observed, bound)``: the bound rounds the worst case up to a whole fp16 ulp at 8."""
    worst = max(brute_force_bound(p, ACCEPTANCE_TILE, seed=i) for i, p in enumerate(acceptance_problems()))
    ulp = 2.0**-7
    return worst, float(np.ceil(worst / ulp) * ulp)
