"""Closed-form counter predictions and a weighted cost proxy.

Per block with ``r`` active rows, K extent ``x`` and ``a = ceil(x / e)``
threads holding work (``T`` threads, ``BK = T*e``):

=================  ===========================================  =====================
counter            baseline                                     added/changed by SMB
=================  ===========================================  =====================
A-tile loads       ``r*x`` 16-bit; VML without perm: ``r*x/2``
                   32-bit
global_atomic      ``2*a*r``                                    ``2*r`` instead
shared_write       ``r*BK`` (staging, tail slots zero-filled)   ``+ 2*r + 2*a*r``
shared_read        ``r*x``                                      ``+ 2*a*r + 2*r``
h2 ops             ``2*r*x`` FMAs                               ``+ 2*a*r`` adds
barriers           1                                            ``+ 2``
=================  ===========================================  =====================

Each h2 op is one ``valu_packed`` unit under ILA and two ``valu_scalar``
units otherwise. Sums run over the distinct row-block and K-block extents,
so M and K tails are exact rather than amortized.

The cost proxy is a dimensionless weighted sum of counters. Its default
weights are arbitrary and its percentages are not comparable to end-to-end
hardware throughput or latency numbers.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from qgemm_lab.errors import ShapeError
from qgemm_lab.kernels.params import N_TILE, TileParams, VariantFlags
from qgemm_lab.simt_sim import CounterSet

CounterPrediction = CounterSet

PROXY_DISCLAIMER = (
    "cost proxy: weighted simulator counters in arbitrary units; "
    "not comparable to measured hardware throughput or latency"
)


@dataclass(frozen=True)
class CostWeights:
    w_atomic: float = 1.0
    w_load16: float = 0.25
    w_load32: float = 0.4
    w_valu_scalar: float = 0.05
    w_valu_packed: float = 0.08
    w_shared: float = 0.01

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    @classmethod
    def from_dict(cls, d: dict) -> CostWeights:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown cost weight(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


def _extents(total: int, step: int) -> list[int]:
    return [min(step, total - off) for off in range(0, total, step)]


def predict(M: int, K: int, N: int, g: int, tile: TileParams, flags: VariantFlags, perm: bool = False) -> CounterPrediction:
    if M < 1 or K < 1 or N < 1 or g < 1:
        raise ShapeError(f"dimensions must be positive: M={M} K={K} N={N} g={g}")
    if K % 8 or N % 8 or K % g:
        raise ShapeError(f"need K%8 == N%8 == K%g == 0, got K={K} N={N} g={g}")
    if flags.vml and tile.elems_per_thread % 2:
        raise ShapeError("vectorized loads need an even elems_per_thread")
    e, bk = tile.elems_per_thread, tile.bk
    nb_n = N // N_TILE
    rows = _extents(M, tile.m_count)
    kext = _extents(K, bk)
    R = sum(rows)
    X = sum(kext)
    A = sum(math.ceil(x / e) for x in kext)
    nb_m, nb_k = len(rows), len(kext)
    blocks = nb_m * nb_n * nb_k

    p = CounterSet()
    # every (row-block, K-block) pair repeats once per column tile
    if flags.vml and not perm:
        p.global_load_32 = nb_n * R * sum(x // 2 for x in kext)
        p.global_load_16 = nb_n * R * sum(x % 2 for x in kext)
    else:
        p.global_load_16 = nb_n * R * X
    p.shared_write = nb_n * R * bk * nb_k
    p.shared_read = nb_n * R * X
    ops = 2 * nb_n * R * X
    if flags.smb:
        p.global_atomic = 2 * nb_n * R * nb_k
        p.shared_write += 2 * nb_n * R * nb_k + 2 * nb_n * R * A
        p.shared_read += 2 * nb_n * R * A + 2 * nb_n * R * nb_k
        ops += 2 * nb_n * R * A
        p.barriers = 3 * blocks
    else:
        p.global_atomic = 2 * nb_n * R * A
        p.barriers = blocks
    if flags.ila:
        p.valu_packed = ops
    else:
        p.valu_scalar = 2 * ops
    return p


@dataclass(frozen=True)
class CompareRow:
    counter: str
    measured: int
    predicted: int

    @property
    def equal(self) -> bool:
        return self.measured == self.predicted


def compare(measured: CounterSet, predicted: CounterPrediction) -> tuple[list[CompareRow], bool]:
    rows = [CompareRow(n, getattr(measured, n), getattr(predicted, n)) for n in CounterSet.names()]
    return rows, all(r.equal for r in rows)


def cost_proxy(c: CounterSet, w: CostWeights = CostWeights()) -> float:
    return (
        w.w_atomic * c.global_atomic
        + w.w_load16 * c.global_load_16
        + w.w_load32 * c.global_load_32
        + w.w_valu_scalar * c.valu_scalar
        + w.w_valu_packed * c.valu_packed
        + w.w_shared * (c.shared_read + c.shared_write)
    )


def reduction_pct(base: float, opt: float) -> float:
    """``100 * (1 - opt/base)``; 0 when both are 0."""
    if base == 0:
        if opt == 0:
            return 0.0
        raise ZeroDivisionError("reduction relative to a zero baseline")
    return 100.0 * (1.0 - opt / base)


def a_load_transactions(c: CounterSet) -> int:
    return c.global_load_16 + c.global_load_32


def valu_instructions(c: CounterSet) -> int:
    return c.valu_scalar + c.valu_packed
