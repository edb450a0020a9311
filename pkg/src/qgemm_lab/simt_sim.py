"""Deterministic SIMT execution harness.

A kernel is a generator function ``kernel(th, *args)`` run once per thread.
It talks to the machine only through the :class:`Thread` handle ``th`` and
synchronizes with ``yield th.barrier()``.

Schedule, fixed and reproducible:

* blocks run one after another in ascending block id;
* a block runs in barrier-delimited phases;
* inside a phase every thread runs to its next barrier (or to completion) in
  ascending thread id.

Global and shared memory hold raw binary16 patterns. A Half2 access touches
two consecutive elements starting at an even offset. Counters follow a
one-call-one-count rule: each load, atomic or shared access call counts once
whatever its width, and a barrier counts once per block each time all of the
block's threads pass it.

Shared memory is not cleared between blocks by the harness; every slot
starts as the poison pattern ``0x7FFF`` and reading a never-written slot
returns that pattern and records a diagnostic on the context.
"""
from __future__ import annotations

import inspect
import sys
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from qgemm_lab import f16core
from qgemm_lab.errors import BarrierDivergence, Misaligned, OutOfBounds, SharedOverflow, SimulationError
from qgemm_lab.f16core import Half, Half2

POISON = 0x7FFF
DEFAULT_SHARED_CAP = 64 * 1024


@dataclass
class CounterSet:
    global_load_16: int = 0
    global_load_32: int = 0
    global_atomic: int = 0
    shared_read: int = 0
    shared_write: int = 0
    valu_packed: int = 0
    valu_scalar: int = 0
    barriers: int = 0

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in self.names()}

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.names()], dtype=np.int64)

    @classmethod
    def from_array(cls, arr) -> CounterSet:
        return cls(*(int(v) for v in arr))

    def __add__(self, other: CounterSet) -> CounterSet:
        return CounterSet(*(a + b for a, b in zip(self.to_array(), other.to_array())))

    def __sub__(self, other: CounterSet) -> CounterSet:
        return CounterSet(*(a - b for a, b in zip(self.to_array(), other.to_array())))


# index of each counter in the flat int64 array used by compiled kernels
C_LOAD16, C_LOAD32, C_ATOMIC, C_SREAD, C_SWRITE, C_PACKED, C_SCALAR, C_BARRIER = range(8)


@dataclass(frozen=True)
class LaunchConfig:
    num_blocks: int
    threads_per_block: int
    shared_bytes: int = 0

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be positive")
        if self.threads_per_block < 1:
            raise ValueError("threads_per_block must be positive")
        if self.shared_bytes < 0:
            raise ValueError("shared_bytes must be non-negative")


@dataclass(eq=False)
class GlobalBuffer:
    tag: str
    data: np.ndarray

    def __len__(self) -> int:
        return len(self.data)

    def check(self, addr: int, width: int = 1) -> None:
        if addr < 0 or addr + width > len(self.data):
            raise OutOfBounds(f"{self.tag}[{addr}:{addr + width}] outside {len(self.data)} elements")
        if width == 2 and addr % 2:
            raise Misaligned(f"{self.tag}: half2 access at odd element {addr}")

    def read_half(self, addr: int) -> Half:
        self.check(addr)
        return Half(int(self.data[addr]))

    def read_half2(self, addr: int) -> Half2:
        self.check(addr, 2)
        return Half2(Half(int(self.data[addr])), Half(int(self.data[addr + 1])))


@dataclass(eq=False)
class SharedBuffer:
    data: np.ndarray
    written: np.ndarray

    @classmethod
    def allocate(cls, nbytes: int) -> SharedBuffer:
        size = nbytes // 2
        return cls(np.full(size, POISON, dtype=np.uint16), np.zeros(size, dtype=bool))


@dataclass
class Diagnostic:
    block: int
    thread: int
    message: str


class _Barrier:
    __slots__ = ("site",)

    def __init__(self, site):
        self.site = site


class Thread:
    """Per-thread handle passed to kernels."""

    def __init__(self, ctx: DeviceContext, block_id: int, thread_id: int, cfg: LaunchConfig, shared: SharedBuffer):
        self.ctx = ctx
        self.block_id = block_id
        self.thread_id = thread_id
        self.block_dim = cfg.threads_per_block
        self.grid_dim = cfg.num_blocks
        self._shared = shared

    # -- global memory
    def global_load_half(self, buf: GlobalBuffer, addr: int) -> Half:
        h = buf.read_half(addr)
        self.ctx.counters.global_load_16 += 1
        return h

    def global_load_half2(self, buf: GlobalBuffer, addr: int) -> Half2:
        v = buf.read_half2(addr)
        self.ctx.counters.global_load_32 += 1
        return v

    def global_store_half(self, buf: GlobalBuffer, addr: int, h: Half) -> None:
        buf.check(addr)
        buf.data[addr] = h.bits

    def global_atomic_add_half2(self, buf: GlobalBuffer, addr: int, v: Half2) -> None:
        cur = buf.read_half2(addr)
        new = f16core.h2_add(cur, v)
        buf.data[addr] = new.lo.bits
        buf.data[addr + 1] = new.hi.bits
        self.ctx.counters.global_atomic += 1

    # -- shared memory
    def _shared_check(self, idx: int, width: int) -> None:
        size = len(self._shared.data)
        if idx < 0 or idx + width > size:
            raise OutOfBounds(f"shared[{idx}:{idx + width}] outside {size} elements")
        if width == 2 and idx % 2:
            raise Misaligned(f"shared half2 access at odd element {idx}")

    def _shared_get(self, idx: int) -> Half:
        if not self._shared.written[idx]:
            self.ctx.diagnostics.append(
                Diagnostic(self.block_id, self.thread_id, f"read of uninitialized shared element {idx}")
            )
        return Half(int(self._shared.data[idx]))

    def shared_read(self, idx: int) -> Half:
        self._shared_check(idx, 1)
        self.ctx.counters.shared_read += 1
        return self._shared_get(idx)

    def shared_write(self, idx: int, h: Half) -> None:
        self._shared_check(idx, 1)
        self.ctx.counters.shared_write += 1
        self._shared.data[idx] = h.bits
        self._shared.written[idx] = True

    def shared_read_half2(self, idx: int) -> Half2:
        self._shared_check(idx, 2)
        self.ctx.counters.shared_read += 1
        return Half2(self._shared_get(idx), self._shared_get(idx + 1))

    def shared_write_half2(self, idx: int, v: Half2) -> None:
        self._shared_check(idx, 2)
        self.ctx.counters.shared_write += 1
        self._shared.data[idx : idx + 2] = (v.lo.bits, v.hi.bits)
        self._shared.written[idx : idx + 2] = True

    def barrier(self) -> _Barrier:
        caller = sys._getframe(1)
        return _Barrier((caller.f_code, caller.f_lineno))

    # -- vector ALU accounting
    def valu_packed_op(self, op: Callable, *args):
        """Issue a half2 op as one packed instruction."""
        self.ctx.counters.valu_packed += 1
        return op(*args)

    def valu_scalar_op(self, op: Callable, *args):
        """Issue a half2 op lowered to two scalar f16 instructions."""
        self.ctx.counters.valu_scalar += 2
        return op(*args)

    def hfma2(self, a: Half2, b: Half2, c: Half2, packed: bool) -> Half2:
        hook = self.valu_packed_op if packed else self.valu_scalar_op
        return hook(f16core.h2_fma, a, b, c)

    def hadd2(self, a: Half2, b: Half2, packed: bool) -> Half2:
        hook = self.valu_packed_op if packed else self.valu_scalar_op
        return hook(f16core.h2_add, a, b)


@dataclass(eq=False)
class DeviceContext:
    """Simulated device: global buffers, counters and diagnostics.

    A context must not be shared between threads while a launch runs.
    """

    shared_cap: int = DEFAULT_SHARED_CAP
    counters: CounterSet = field(default_factory=CounterSet)
    buffers: dict[str, GlobalBuffer] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def alloc(self, tag: str, init) -> GlobalBuffer:
        """Allocate a global buffer from a size, float16 array or uint16 pattern array."""
        if isinstance(init, (int, np.integer)):
            data = np.zeros(int(init), dtype=np.uint16)
        else:
            arr = np.asarray(init)
            if arr.dtype == np.float16:
                arr = arr.view(np.uint16)
            if arr.dtype != np.uint16:
                raise TypeError(f"global buffers hold binary16 patterns, got {arr.dtype}")
            data = arr.reshape(-1).copy()
        buf = GlobalBuffer(tag, data)
        self.buffers[tag] = buf
        return buf

    def launch(self, kernel, cfg: LaunchConfig, *args, footprint: int | None = None, thread_order=None) -> CounterSet:
        """Run ``kernel`` over the grid and return the counters this launch added.

        ``thread_order(block_id, phase)`` may return a permutation of thread ids
        to run a phase in; it exists for schedule-sensitivity experiments.
        """
        if cfg.shared_bytes > self.shared_cap:
            raise SharedOverflow(f"{cfg.shared_bytes} bytes of shared memory exceeds cap {self.shared_cap}")
        if footprint is not None and footprint > cfg.shared_bytes:
            raise SharedOverflow(f"kernel needs {footprint} bytes, launch grants {cfg.shared_bytes}")
        before = CounterSet(**self.counters.as_dict())
        is_gen = inspect.isgeneratorfunction(kernel)
        for b in range(cfg.num_blocks):
            shared = SharedBuffer.allocate(cfg.shared_bytes)
            threads = [Thread(self, b, t, cfg, shared) for t in range(cfg.threads_per_block)]
            if not is_gen:
                for t in self._order(thread_order, b, 0, cfg):
                    kernel(threads[t], *args)
                continue
            gens = [kernel(th, *args) for th in threads]
            phase = 0
            while True:
                sites = [None] * len(gens)
                for t in self._order(thread_order, b, phase, cfg):
                    try:
                        token = next(gens[t])
                    except StopIteration:
                        continue
                    if not isinstance(token, _Barrier):
                        raise SimulationError(f"kernel yielded {token!r}; only th.barrier() may be yielded")
                    sites[t] = token.site
                if all(s is None for s in sites):
                    break
                if len(set(sites)) != 1:
                    waiting = sum(s is not None for s in sites)
                    raise BarrierDivergence(
                        f"block {b} phase {phase}: {waiting}/{len(sites)} threads at a barrier, sites differ or some exited"
                    )
                self.counters.barriers += 1
                phase += 1
        return self.counters - before

    @staticmethod
    def _order(thread_order, block: int, phase: int, cfg: LaunchConfig):
        if thread_order is None:
            return range(cfg.threads_per_block)
        order = list(thread_order(block, phase))
        if sorted(order) != list(range(cfg.threads_per_block)):
            raise ValueError("thread_order must return a permutation of thread ids")
        return order
