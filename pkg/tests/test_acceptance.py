"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances are exact (counters, bit patterns) except the numerical bound,
which is the frozen ``ACCEPTANCE_BOUND`` from :mod:`qgemm_lab.kernels.bounds`.
"""
import hashlib
import time

import numpy as np
import pytest
from click.testing import CliRunner

from qgemm_lab import bench, f16core, gptq_format
from qgemm_lab.cli import main
from qgemm_lab.config import RunConfig
from qgemm_lab.f16core import Half, Half2
from qgemm_lab.kernels import (
    ALL_VARIANTS,
    BASELINE,
    OPT4GPTQ,
    TileParams,
    VariantFlags,
    gemm_half_q_half,
    load_a_tile,
    oracle_gemm_f16_canonical,
    oracle_gemm_f32,
)
from qgemm_lab.kernels.bounds import ACCEPTANCE_BOUND, ACCEPTANCE_SEEDS, ACCEPTANCE_SHAPE, ACCEPTANCE_TILE
from qgemm_lab.kernels.program import BlockCoords
from qgemm_lab.perf_model import a_load_transactions, compare, predict
from qgemm_lab.rng import gen_random, make_problem, splitmix64
from qgemm_lab.simt_sim import DeviceContext, LaunchConfig
from qgemm_lab.verify import reference_ops


@pytest.fixture
def criterion(capsys):
    """Run ``check()`` under a time limit and print one PASS/FAIL line."""

    def run(number: int, title: str, limit_s: float, check):
        start = time.perf_counter()
        error = None
        try:
            detail = check()
        except AssertionError as exc:
            error = exc
            detail = str(exc).splitlines()[0] if str(exc) else "assertion failed"
        elapsed = time.perf_counter() - start
        if error is None and elapsed >= limit_s:
            error = AssertionError(f"took {elapsed:.2f}s, limit {limit_s:g}s")
            detail = str(error)
        status = "PASS" if error is None else "FAIL"
        with capsys.disabled():
            print(f"\n{status} criterion {number} ({title}) in {elapsed:.2f}s: {detail}")
        if error is not None:
            raise error

    return run


def max_err(c: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(c.view(np.float16).astype(np.float64) - ref.astype(np.float64))))


def acceptance_problems(perm_mode="none"):
    M, K, N, g = ACCEPTANCE_SHAPE
    return [make_problem(s, M, K, N, g, perm_mode) for s in ACCEPTANCE_SEEDS]


def test_criterion_1_smb_atomic_reduction(criterion):
    def check():
        tile = TileParams(threads=64, elems_per_thread=2, m_count=1)
        p = make_problem(1, 2, 256, 16, 128)  # full tiles: K is a multiple of BK=128
        blocks = tile.num_blocks(2, 256, 16)
        _, base = gemm_half_q_half(p, tile, BASELINE, backend="sim")
        _, smb = gemm_half_q_half(p, tile, VariantFlags(smb=True), backend="sim")
        assert base.global_atomic == 128 * blocks, base.global_atomic
        assert smb.global_atomic == 2 * blocks, smb.global_atomic
        pct = 100 * (1 - smb.global_atomic / base.global_atomic)
        assert pct == 98.4375
        for flags, measured in ((BASELINE, base), (VariantFlags(smb=True), smb)):
            assert compare(measured, predict(2, 256, 16, 128, tile, flags))[1]
        report = bench.run_matrix(RunConfig())
        mismatched = [r for r in report["rows"]
                      if bench.counters_from_row(r) != bench.counters_from_row(r, predicted=True)]
        assert not mismatched, f"{len(mismatched)} rows differ from prediction"
        return f"{base.global_atomic // blocks} -> {smb.global_atomic // blocks} atomics/block ({pct}%), " \
               f"{len(report['rows'])} default-matrix rows match predictions"

    criterion(1, "SMB atomic reduction", 5, check)


def staged_block_a(p, tile, flags):
    """Contents of block_a after the staging phase, for every block."""
    seen = {}

    def kernel(th, a_buf):
        bc = BlockCoords(th.block_id, p.M, p.K, p.N, tile)
        load_a_tile(th, a_buf, p.B.perm, p.K, bc, tile, flags)
        yield th.barrier()
        if th.thread_id == 0:
            seen[th.block_id] = [th.shared_read(i).bits for i in range(tile.m_count * tile.bk)]

    ctx = DeviceContext()
    cfg = LaunchConfig(tile.num_blocks(p.M, p.K, p.N), tile.threads, tile.shared_bytes)
    ctx.launch(kernel, cfg, ctx.alloc("A", p.A))
    return seen


def test_criterion_2_vml_load_reduction(criterion):
    def check():
        tile = ACCEPTANCE_TILE
        small = make_problem(4, 4, 256, 8, 128)
        assert staged_block_a(small, tile, BASELINE) == staged_block_a(small, tile, VariantFlags(vml=True))
        for p in acceptance_problems():
            for smb in (False, True):
                for ila in (False, True):
                    scalar_c, scalar = gemm_half_q_half(p, tile, VariantFlags(smb, False, ila))
                    vec_c, vec = gemm_half_q_half(p, tile, VariantFlags(smb, True, ila))
                    assert vec.global_load_32 * 2 == scalar.global_load_16 and vec.global_load_16 == 0
                    assert np.array_equal(scalar_c, vec_c), "C differs across the vml toggle"
        worst = 0.0
        for p in acceptance_problems("seeded-shuffle"):
            ref = oracle_gemm_f32(p)
            for smb in (False, True):
                c0, n0 = gemm_half_q_half(p, tile, VariantFlags(smb=smb))
                c1, n1 = gemm_half_q_half(p, tile, VariantFlags(smb=smb, vml=True))
                assert n0 == n1, "transaction counts changed under a permutation"
                worst = max(worst, max_err(c0, ref), max_err(c1, ref))
        assert worst <= ACCEPTANCE_BOUND, f"permuted error {worst} > {ACCEPTANCE_BOUND}"
        return f"load32 = load16/2 ({scalar.global_load_16} -> {vec.global_load_32}), " \
               f"block_a and C bit-identical; perm: counts unchanged, max err {worst:.6f} <= {ACCEPTANCE_BOUND}"

    criterion(2, "VML load reduction", 5, check)


def test_criterion_3_ila_instruction_halving(criterion):
    def check():
        tile = ACCEPTANCE_TILE
        M, K, N, g = ACCEPTANCE_SHAPE
        for p in acceptance_problems():
            for smb in (False, True):
                for vml in (False, True):
                    off_c, off = gemm_half_q_half(p, tile, VariantFlags(smb, vml, False))
                    on_c, on = gemm_half_q_half(p, tile, VariantFlags(smb, vml, True))
                    assert off.valu_packed == 0 and on.valu_scalar == 0
                    assert on.valu_packed * 2 == off.valu_scalar
                    assert compare(on, predict(M, K, N, g, tile, VariantFlags(smb, vml, True)))[1]
                    assert compare(off, predict(M, K, N, g, tile, VariantFlags(smb, vml, False)))[1]
                    assert np.array_equal(off_c, on_c), "C differs across the ila toggle"
        return f"{off.valu_scalar} scalar units -> {on.valu_packed} packed units, C bit-identical"

    criterion(3, "ILA instruction halving", 5, check)


TOUCHED = {
    "smb": ("global_atomic", "shared_read", "shared_write", "barriers", "valu_packed", "valu_scalar"),
    "vml": ("global_load_16", "global_load_32"),
    "ila": ("valu_packed", "valu_scalar"),
}


def flip(f: VariantFlags, name: str) -> VariantFlags:
    bits = {k: getattr(f, k) for k in ("smb", "vml", "ila")}
    bits[name] = not bits[name]
    return VariantFlags(**bits)


def test_criterion_4_composability(criterion):
    def check():
        tile = ACCEPTANCE_TILE
        M, K, N, g = ACCEPTANCE_SHAPE
        p = acceptance_problems()[0]
        run = {f: gemm_half_q_half(p, tile, f)[1] for f in ALL_VARIANTS}
        base, opt = run[BASELINE], run[OPT4GPTQ]
        smb, vml, ila = run[VariantFlags(smb=True)], run[VariantFlags(vml=True)], run[VariantFlags(ila=True)]
        assert opt.global_atomic == smb.global_atomic
        assert (opt.global_load_16, opt.global_load_32) == (vml.global_load_16, vml.global_load_32)
        assert a_load_transactions(opt) * 2 == a_load_transactions(base)
        assert opt.valu_scalar == 0 and opt.valu_packed * 2 == smb.valu_scalar
        assert compare(opt, predict(M, K, N, g, tile, OPT4GPTQ))[1]
        # disjoint counters: toggling one flag leaves every counter outside its own set untouched,
        # and the smb/vml changes to their own counters do not depend on the other flags
        for name, touched in TOUCHED.items():
            deltas = set()
            for f in ALL_VARIANTS:
                if getattr(f, name):
                    continue
                d = run[flip(f, name)] - run[f]
                assert all(v == 0 for k, v in d.as_dict().items() if k not in touched), (name, d)
                deltas.add(tuple(getattr(d, k) for k in touched if not k.startswith("valu")))
            assert len(deltas) == 1, (name, deltas)
        return f"atomics {base.global_atomic}->{opt.global_atomic}, loads {a_load_transactions(base)}->" \
               f"{a_load_transactions(opt)}, valu units {base.valu_scalar}->{opt.valu_packed} in one run"

    criterion(4, "composability", 5, check)


def test_criterion_5_numerical_correctness(criterion):
    def check():
        tile = ACCEPTANCE_TILE
        worst = 0.0
        for p in acceptance_problems():
            ref = oracle_gemm_f32(p)
            canonical = {smb: oracle_gemm_f16_canonical(p, tile, VariantFlags(smb=smb)) for smb in (False, True)}
            for flags in ALL_VARIANTS:
                c, _ = gemm_half_q_half(p, tile, flags)
                assert np.array_equal(c, canonical[flags.smb]), f"{flags.name} not bit-exact"
                worst = max(worst, max_err(c, ref))
        assert worst <= ACCEPTANCE_BOUND, f"max err {worst} > B={ACCEPTANCE_BOUND}"
        return f"8 variants x {len(ACCEPTANCE_SEEDS)} seeds bit-exact; max err {worst:.6f} <= B={ACCEPTANCE_BOUND}"

    criterion(5, "numerical correctness", 30, check)


def test_criterion_6_f16core_conformance(criterion):
    def check():
        n = 100_000
        a, b, c = (gen_random(s, n, "raw").astype(np.uint16) for s in splitmix64(2024, 3).tolist())
        ref_add, ref_mul, ref_fma = reference_ops(a, b, c)
        assert np.array_equal(f16core.add_array(a, b), ref_add), "h_add mismatch"
        assert np.array_equal(f16core.mul_array(a, b), ref_mul), "h_mul mismatch"
        assert np.array_equal(f16core.fma_array(a, b, c), ref_fma), "h_fma mismatch"
        for v in range(1 << 16):
            other = Half(v ^ 0x5A5A)
            for word in (Half2(Half(v), other), Half2(other, Half(v))):
                assert Half2.from_bits(word.bits) == word
                assert f16core.halves2half2(f16core.low2half(word), f16core.high2half(word)) == word
        return f"{n} add/mul pairs and {n} fma triples bit-exact; lane roundtrip over all 65536 patterns"

    criterion(6, "f16core conformance", 10, check)


def test_criterion_7_format_roundtrip(criterion):
    def check():
        # (k, n, g): K multiples of BK and K with a BK tail, group sizes dividing K
        shapes = ((128, 8, 128), (256, 16, 64), (40, 8, 8), (96, 24, 32), (8, 8, 8))
        perms = 0
        for i, seed in enumerate(splitmix64(77, 100).tolist()):
            k, n, g = shapes[i % len(shapes)]
            w = make_problem(seed, 1, k, n, g, ("none", "seeded-shuffle")[i % 2]).B
            perms += w.perm is not None
            q, s, z, perm = gptq_format.unpack(w)
            again = gptq_format.pack(q, s, z, g, perm)
            assert again == w, f"pack/unpack differs for container {i}"
            q2, s2, z2, p2 = gptq_format.unpack(again)
            assert np.array_equal(q, q2) and np.array_equal(s, s2) and np.array_equal(z, z2)
            assert gptq_format.deserialize(gptq_format.to_bytes(w)) == w, f"file roundtrip differs for {i}"
        return f"100 containers ({perms} with perm) roundtrip exactly"

    criterion(7, "format roundtrip", 5, check)


def test_criterion_8_determinism(criterion, tmp_path):
    def check():
        runner = CliRunner()
        digests = []
        for name in ("first", "second"):
            out = tmp_path / name
            r = runner.invoke(main, ["run", "--out", str(out)])
            assert r.exit_code == 0, r.output
            digests.append({f: hashlib.sha256((out / f).read_bytes()).hexdigest()
                            for f in (bench.REPORT_CSV, bench.REPORT_JSON)})
        assert digests[0] == digests[1], "reports differ between runs"
        return f"report.csv sha256 {digests[0][bench.REPORT_CSV][:16]}..., report.json identical"

    criterion(8, "determinism", 10, check)


def test_criterion_9_accuracy_neutrality(criterion):
    def check():
        tile = ACCEPTANCE_TILE
        worst_reorder = 0.0
        for p in acceptance_problems():
            outs = {f: gemm_half_q_half(p, tile, f)[0] for f in ALL_VARIANTS}
            for f in ALL_VARIANTS:
                # vml and ila never alter bits: every variant equals its smb-only counterpart
                assert np.array_equal(outs[f], outs[VariantFlags(smb=f.smb)]), f.name
            base = outs[BASELINE].view(np.float16).astype(np.float64)
            worst_reorder = max(worst_reorder, max_err(outs[VariantFlags(smb=True)], base))
            ref = oracle_gemm_f32(p)
            assert max(max_err(c, ref) for c in outs.values()) <= ACCEPTANCE_BOUND
        assert worst_reorder <= ACCEPTANCE_BOUND
        return f"vml/ila bit-neutral; smb only reorders sums (max diff {worst_reorder:.6f} <= B)"

    criterion(9, "accuracy neutrality", 30, check)
