"""The GEMM kernel family as a per-thread program for :mod:`qgemm_lab.simt_sim`.

This is the readable, fully checked form of the kernel. The compiled block
kernel in :mod:`qgemm_lab.kernels.compiled` must agree with it bit for bit,
counters included.
"""
from __future__ import annotations

from qgemm_lab.f16core import Half, Half2, high2half, low2half
from qgemm_lab.gptq_format import dequant_element
from qgemm_lab.kernels.params import N_TILE, GemmProblem, TileParams, VariantFlags

ZERO = Half(0)
ZERO2 = Half2(ZERO, ZERO)


class BlockCoords:
    __slots__ = ("offset_m", "m_rows", "n", "offset_k", "extent")

    def __init__(self, block_id: int, M: int, K: int, N: int, tile: TileParams):
        nb_m, nb_n, nb_k = tile.grid(M, K, N)
        bk = block_id % nb_k
        bn = (block_id // nb_k) % nb_n
        bm = block_id // (nb_k * nb_n)
        self.offset_m = bm * tile.m_count
        self.m_rows = min(tile.m_count, M - self.offset_m)
        self.n = bn * N_TILE
        self.offset_k = bk * tile.bk
        self.extent = min(tile.bk, K - self.offset_k)


def load_a_tile(th, a_buf, perm, K: int, bc: BlockCoords, tile: TileParams, flags: VariantFlags):
    """Stage this thread's slice of ``block_a[m_count][BK]`` in shared memory.

    Thread ``t`` owns slots ``t*e .. t*e+e-1`` of every row. Slots past the
    end of K are zero-filled without touching global memory.
    """
    e = tile.elems_per_thread
    lo = th.thread_id * e
    bk = tile.bk
    vector = flags.vml and perm is None
    for m in range(bc.m_rows):
        row = (bc.offset_m + m) * K
        slot = m * bk
        if vector:
            for j in range(lo, lo + e, 2):
                if j + 1 < bc.extent:
                    a0_h2 = th.global_load_half2(a_buf, row + bc.offset_k + j)
                    th.shared_write(slot + j, low2half(a0_h2))
                    th.shared_write(slot + j + 1, high2half(a0_h2))
                else:
                    for jj in (j, j + 1):
                        if jj < bc.extent:
                            th.shared_write(slot + jj, th.global_load_half(a_buf, row + bc.offset_k + jj))
                        else:
                            th.shared_write(slot + jj, ZERO)
        else:
            for j in range(lo, lo + e):
                if j < bc.extent:
                    k = bc.offset_k + j
                    src = int(perm[k]) if perm is not None else k
                    th.shared_write(slot + j, th.global_load_half(a_buf, row + src))
                else:
                    th.shared_write(slot + j, ZERO)


def mac(th, w, bc: BlockCoords, tile: TileParams, flags: VariantFlags):
    """Per-thread partial sums ``(result01[m], result23[m])`` over the owned K slots."""
    e = tile.elems_per_thread
    lo = th.thread_id * e
    result01 = [ZERO2] * bc.m_rows
    result23 = [ZERO2] * bc.m_rows
    for m in range(bc.m_rows):
        for j in range(lo, min(lo + e, bc.extent)):
            k = bc.offset_k + j
            a = th.shared_read(m * tile.bk + j)
            a2 = Half2(a, a)
            b = [dequant_element(w, k, bc.n + c) for c in range(N_TILE)]
            result01[m] = th.hfma2(a2, Half2(b[0], b[1]), result01[m], flags.ila)
            result23[m] = th.hfma2(a2, Half2(b[2], b[3]), result23[m], flags.ila)
    return result01, result23


def store_smb(th, c_buf, N: int, bc: BlockCoords, tile: TileParams, flags: VariantFlags, result01, result23):
    """Reduce the block's partials in shared memory, then thread 0 issues 2 atomics per row."""
    base = tile.result_offset
    active = th.thread_id * tile.elems_per_thread < bc.extent
    if th.thread_id == 0:
        for m in range(bc.m_rows):
            th.shared_write_half2(base + 4 * m, ZERO2)
            th.shared_write_half2(base + 4 * m + 2, ZERO2)
    yield th.barrier()
    if active:
        for m in range(bc.m_rows):
            for slot, part in ((base + 4 * m, result01[m]), (base + 4 * m + 2, result23[m])):
                acc = th.shared_read_half2(slot)
                th.shared_write_half2(slot, th.hadd2(acc, part, flags.ila))
    yield th.barrier()
    if th.thread_id == 0:
        for m in range(bc.m_rows):
            out = (bc.offset_m + m) * N + bc.n
            th.global_atomic_add_half2(c_buf, out, th.shared_read_half2(base + 4 * m))
            th.global_atomic_add_half2(c_buf, out + 2, th.shared_read_half2(base + 4 * m + 2))


def gemm_program(th, a_buf, c_buf, problem: GemmProblem, tile: TileParams, flags: VariantFlags):
    M, K, N = problem.M, problem.K, problem.N
    w = problem.B
    bc = BlockCoords(th.block_id, M, K, N, tile)
    load_a_tile(th, a_buf, w.perm, K, bc, tile, flags)
    yield th.barrier()
    active = th.thread_id * tile.elems_per_thread < bc.extent
    result01, result23 = mac(th, w, bc, tile, flags) if active else ([], [])
    if flags.smb:
        yield from store_smb(th, c_buf, N, bc, tile, flags, result01, result23)
    elif active:
        for m in range(bc.m_rows):
            out = (bc.offset_m + m) * N + bc.n
            th.global_atomic_add_half2(c_buf, out, result01[m])
            th.global_atomic_add_half2(c_buf, out + 2, result23[m])
