"""GPTQ 4-bit GEMM kernel family: baseline, SMB, VML, ILA and their combinations.

Every variant computes ``C += A @ dequant(B)`` with the same grid: blocks
cover ``m_count`` rows x 4 columns x ``BK`` K-slots, ordered M-major, then N,
then K. Inside a block, thread ``t`` owns K-slots ``t*e .. t*e+e-1``.

* ``smb`` - partials are reduced in shared memory and thread 0 issues two
  Half2 atomics per row, instead of two per row from every thread;
* ``vml`` - the A tile is staged with Half2 loads (only without a K
  permutation; a gather cannot be paired);
* ``ila`` - each half2 FMA/ADD is one packed instruction instead of two
  scalar ones. Values are identical either way.
"""
from __future__ import annotations

import numpy as np

from qgemm_lab import _jit
from qgemm_lab.errors import SharedOverflow
from qgemm_lab.kernels import compiled
from qgemm_lab.kernels.oracles import dequant_matrix, oracle_gemm_f16_canonical, oracle_gemm_f32
from qgemm_lab.kernels.params import (
    ALL_VARIANTS,
    BASELINE,
    N_TILE,
    OPT4GPTQ,
    GemmProblem,
    TileParams,
    VariantFlags,
    check_tile,
)
from qgemm_lab.kernels.program import gemm_program, load_a_tile, store_smb
from qgemm_lab.simt_sim import CounterSet, DeviceContext, LaunchConfig

BACKENDS = ("compiled", "sim")

__all__ = [
    "ALL_VARIANTS",
    "BASELINE",
    "BACKENDS",
    "N_TILE",
    "OPT4GPTQ",
    "GemmProblem",
    "TileParams",
    "VariantFlags",
    "dequant_matrix",
    "gemm_half_q_half",
    "gemm_program",
    "load_a_tile",
    "oracle_gemm_f16_canonical",
    "oracle_gemm_f32",
    "store_smb",
]


def gemm_half_q_half(
    problem: GemmProblem,
    tile: TileParams,
    flags: VariantFlags,
    ctx: DeviceContext | None = None,
    backend: str = "compiled",
) -> tuple[np.ndarray, CounterSet]:
    """Run one kernel variant; returns C as ``M x N`` uint16 patterns and the launch counters.

    ``backend="sim"`` interprets the per-thread program on the SIMT harness;
    ``"compiled"`` runs the block-sequential kernel (numba unless
    ``QGEMM_LAB_NO_JIT`` is set). Both give identical C and counters.
    """
    check_tile(problem, tile, flags)
    ctx = ctx if ctx is not None else DeviceContext()
    M, K, N = problem.M, problem.K, problem.N
    cfg = LaunchConfig(tile.num_blocks(M, K, N), tile.threads, tile.shared_bytes)
    a_buf = ctx.alloc("A", problem.A)
    c_buf = ctx.alloc("C", M * N)
    if backend == "sim":
        counters = ctx.launch(gemm_program, cfg, a_buf, c_buf, problem, tile, flags, footprint=tile.shared_bytes)
    elif backend == "compiled":
        if cfg.shared_bytes > ctx.shared_cap:
            raise SharedOverflow(f"{cfg.shared_bytes} bytes of shared memory exceeds cap {ctx.shared_cap}")
        w = problem.B
        perm = w.perm.astype(np.int64) if w.perm is not None else np.zeros(0, dtype=np.int64)
        arr = np.zeros(8, dtype=np.int64)
        compiled.gemm_blocks(
            a_buf.data, c_buf.data, w.qweight, w.scales, w.zeros, w.group_size, perm,
            M, K, N, tile.threads, tile.elems_per_thread, tile.m_count,
            flags.smb, flags.vml, flags.ila, arr,
        )
        counters = CounterSet.from_array(arr)
        ctx.counters = ctx.counters + counters
    else:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    return c_buf.data.reshape(M, N).copy(), counters


def jit_enabled() -> bool:
    return _jit.HAVE_NUMBA
