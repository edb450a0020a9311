from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from qgemm_lab.errors import ShapeError
from qgemm_lab.gptq_format import QuantizedWeight

N_TILE = 4


@dataclass(frozen=True, eq=False)
class GemmProblem:
    """``C[M, N] = A[M, K] @ dequant(B)[K, N]``; ``A`` holds binary16 patterns."""

    A: np.ndarray
    B: QuantizedWeight

    def __post_init__(self):
        a = np.asarray(self.A)
        if a.dtype == np.float16:
            a = a.view(np.uint16)
        if a.dtype != np.uint16 or a.ndim != 2:
            raise ShapeError("A must be a 2-D float16 or uint16 pattern matrix")
        if a.shape[0] < 1:
            raise ShapeError("M must be at least 1")
        if a.shape[1] != self.B.k:
            raise ShapeError(f"A has K={a.shape[1]} but B has k={self.B.k}")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "A", a)

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return self.B.k

    @property
    def N(self) -> int:
        return self.B.n

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.M, self.K, self.N, self.B.group_size


@dataclass(frozen=True)
class TileParams:
    threads: int = 64
    elems_per_thread: int = 2
    m_count: int = 4

    def __post_init__(self):
        if self.threads < 1 or self.elems_per_thread < 1 or self.m_count < 1:
            raise ShapeError(f"tile parameters must be positive: {self}")

    @property
    def bk(self) -> int:
        return self.threads * self.elems_per_thread

    @property
    def result_offset(self) -> int:
        """Element offset of block_result, rounded up so its Half2 slots are aligned."""
        return (self.m_count * self.bk + 1) & ~1

    @property
    def shared_halves(self) -> int:
        # block_a[m_count][BK], padding to even, then block_result[m_count][2] Half2 pairs
        return self.result_offset + 4 * self.m_count

    @property
    def shared_bytes(self) -> int:
        return 2 * self.shared_halves

    def grid(self, M: int, K: int, N: int) -> tuple[int, int, int]:
        """Blocks along (M, N, K); block id = (bm * nb_n + bn) * nb_k + bk."""
        return math.ceil(M / self.m_count), N // N_TILE, math.ceil(K / self.bk)

    def num_blocks(self, M: int, K: int, N: int) -> int:
        nb_m, nb_n, nb_k = self.grid(M, K, N)
        return nb_m * nb_n * nb_k


@dataclass(frozen=True)
class VariantFlags:
    smb: bool = False
    vml: bool = False
    ila: bool = False

    @property
    def name(self) -> str:
        on = [n.upper() for n in ("smb", "vml", "ila") if getattr(self, n)]
        if len(on) == 3:
            return "Opt4GPTQ"
        return "+".join(on) if on else "baseline"

    @classmethod
    def parse(cls, text: str) -> VariantFlags:
        """Parse ``baseline``, ``opt4gptq`` or a ``+``-joined subset like ``smb+ila``."""
        t = text.strip().lower()
        if t == "baseline":
            return cls()
        if t == "opt4gptq":
            return cls(True, True, True)
        parts = {p.strip() for p in t.split("+")}
        unknown = parts - {"smb", "vml", "ila"}
        if unknown:
            raise ValueError(f"unknown variant flag(s): {sorted(unknown)}")
        return cls("smb" in parts, "vml" in parts, "ila" in parts)


BASELINE = VariantFlags()
OPT4GPTQ = VariantFlags(True, True, True)
ALL_VARIANTS = tuple(VariantFlags(*bits) for bits in itertools.product((False, True), repeat=3))


def check_tile(problem: GemmProblem, tile: TileParams, flags: VariantFlags) -> None:
    if flags.vml and tile.elems_per_thread % 2:
        raise ShapeError(f"vectorized loads need an even elems_per_thread, got {tile.elems_per_thread}")
    if problem.N % N_TILE:
        raise ShapeError(f"N={problem.N} is not a multiple of {N_TILE}")
