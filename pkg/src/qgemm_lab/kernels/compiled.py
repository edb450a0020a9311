"""Block-sequential compiled form of the GEMM kernel family.

Runs the exact schedule of :func:`qgemm_lab.kernels.program.gemm_program` on
flat arrays: blocks in ascending id, and inside each block the phases
(A-tile load | MAC [+ SMB init] | SMB accumulate | SMB store) with threads in
ascending id. Counters land in an int64 array indexed by the ``C_*``
constants of :mod:`qgemm_lab.simt_sim`.

Callers validate shapes first; the compiled code does no bounds checking.
"""
import numpy as np

from qgemm_lab._jit import njit
from qgemm_lab.f16core import add_bits, bits_to_f64, f64_to_bits, fma_bits
from qgemm_lab.simt_sim import C_ATOMIC, C_BARRIER, C_LOAD16, C_LOAD32, C_PACKED, C_SCALAR, C_SREAD, C_SWRITE


@njit
def _dequant(qweight, scales, zeros, group_size, k, col):
    code = (int(qweight[k >> 3, col]) >> (4 * (k & 7))) & 0xF
    grp = k // group_size
    zero = (int(zeros[grp, col >> 3]) >> (4 * (col & 7))) & 0xF
    return f64_to_bits(bits_to_f64(scales[grp, col]) * (code - zero))


@njit
def _valu(counters, ila):
    if ila:
        counters[C_PACKED] += 1
    else:
        counters[C_SCALAR] += 2


@njit
def gemm_blocks(a, c, qweight, scales, zeros, group_size, perm, M, K, N, threads, e, m_count, smb, vml, ila, counters):
    """Run every block of the grid; ``a``/``c`` are flat binary16 pattern arrays, ``perm`` is empty when absent."""
    bk_size = threads * e
    nb_m = (M + m_count - 1) // m_count
    nb_n = N // 4
    nb_k = (K + bk_size - 1) // bk_size
    has_perm = perm.shape[0] > 0
    vector = vml and not has_perm
    block_a = np.zeros(m_count * bk_size, dtype=np.uint16)
    block_result = np.zeros(4 * m_count, dtype=np.uint16)
    # per-thread registers: result01 lanes 0-1, result23 lanes 2-3
    regs = np.zeros((threads, m_count, 4), dtype=np.uint16)
    bvals = np.zeros(4, dtype=np.uint16)

    for block in range(nb_m * nb_n * nb_k):
        bkb = block % nb_k
        bn = (block // nb_k) % nb_n
        bm = block // (nb_k * nb_n)
        offset_m = bm * m_count
        m_rows = min(m_count, M - offset_m)
        n = bn * 4
        offset_k = bkb * bk_size
        extent = min(bk_size, K - offset_k)
        t_active = (extent + e - 1) // e

        # phase 1: stage block_a
        for t in range(threads):
            lo = t * e
            for m in range(m_rows):
                row = (offset_m + m) * K
                slot = m * bk_size
                if vector:
                    for j in range(lo, lo + e, 2):
                        if j + 1 < extent:
                            block_a[slot + j] = a[row + offset_k + j]
                            block_a[slot + j + 1] = a[row + offset_k + j + 1]
                            counters[C_LOAD32] += 1
                            counters[C_SWRITE] += 2
                        else:
                            for jj in range(j, j + 2):
                                if jj < extent:
                                    block_a[slot + jj] = a[row + offset_k + jj]
                                    counters[C_LOAD16] += 1
                                else:
                                    block_a[slot + jj] = 0
                                counters[C_SWRITE] += 1
                else:
                    for j in range(lo, lo + e):
                        if j < extent:
                            k = offset_k + j
                            src = perm[k] if has_perm else k
                            block_a[slot + j] = a[row + src]
                            counters[C_LOAD16] += 1
                        else:
                            block_a[slot + j] = 0
                        counters[C_SWRITE] += 1
        counters[C_BARRIER] += 1

        # phase 2: MAC; baseline threads publish their partials right away
        for t in range(t_active):
            lo = t * e
            for m in range(m_rows):
                r0 = 0
                r1 = 0
                r2 = 0
                r3 = 0
                for j in range(lo, min(lo + e, extent)):
                    k = offset_k + j
                    av = block_a[m * bk_size + j]
                    counters[C_SREAD] += 1
                    for cc in range(4):
                        bvals[cc] = _dequant(qweight, scales, zeros, group_size, k, n + cc)
                    r0 = fma_bits(av, bvals[0], r0)
                    r1 = fma_bits(av, bvals[1], r1)
                    _valu(counters, ila)
                    r2 = fma_bits(av, bvals[2], r2)
                    r3 = fma_bits(av, bvals[3], r3)
                    _valu(counters, ila)
                regs[t, m, 0] = r0
                regs[t, m, 1] = r1
                regs[t, m, 2] = r2
                regs[t, m, 3] = r3
            if not smb:
                for m in range(m_rows):
                    out = (offset_m + m) * N + n
                    for lane in range(4):
                        c[out + lane] = add_bits(c[out + lane], regs[t, m, lane])
                    counters[C_ATOMIC] += 2
        if not smb:
            continue

        # thread 0 initializes block_result at the end of its phase-2 work
        for m in range(m_rows):
            for lane in range(4):
                block_result[4 * m + lane] = 0
            counters[C_SWRITE] += 2
        counters[C_BARRIER] += 1

        # phase 3: shared accumulation in thread order
        for t in range(t_active):
            for m in range(m_rows):
                for lane in range(4):
                    block_result[4 * m + lane] = add_bits(block_result[4 * m + lane], regs[t, m, lane])
                counters[C_SREAD] += 2
                counters[C_SWRITE] += 2
                _valu(counters, ila)
                _valu(counters, ila)
        counters[C_BARRIER] += 1

        # phase 4: thread 0 writes the block's sums with two atomics per row
        for m in range(m_rows):
            out = (offset_m + m) * N + n
            for lane in range(4):
                c[out + lane] = add_bits(c[out + lane], block_result[4 * m + lane])
            counters[C_SREAD] += 2
            counters[C_ATOMIC] += 2
