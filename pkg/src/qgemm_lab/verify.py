"""Self-check suite behind ``qgemm-lab verify``."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qgemm_lab import bench, f16core, gptq_format
from qgemm_lab.config import RunConfig
from qgemm_lab.errors import QGemmLabError
from qgemm_lab.rng import gen_random, make_problem, splitmix64


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


def reference_canonical(bits: np.ndarray) -> np.ndarray:
    """Map every NaN pattern to the canonical quiet NaN."""
    bits = bits.astype(np.uint16)
    nan = ((bits & 0x7C00) == 0x7C00) & ((bits & 0x3FF) != 0)
    return np.where(nan, np.uint16(f16core.CANONICAL_NAN), bits)


def reference_ops(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """numpy reference for add, mul (binary32 then narrow) and fma (binary64 then narrow)."""
    fa, fb, fc = (x.view(np.float16) for x in (a, b, c))
    with np.errstate(all="ignore"):
        add = (fa.astype(np.float32) + fb.astype(np.float32)).astype(np.float16)
        mul = (fa.astype(np.float32) * fb.astype(np.float32)).astype(np.float16)
        fma = (fa.astype(np.float64) * fb.astype(np.float64) + fc.astype(np.float64)).astype(np.float16)
    return tuple(reference_canonical(x.view(np.uint16)) for x in (add, mul, fma))


def check_f16core(seed: int, count: int) -> list[Check]:
    a, b, c = (gen_random(s, count, "raw").astype(np.uint16) for s in splitmix64(seed, 3).tolist())
    ref_add, ref_mul, ref_fma = reference_ops(a, b, c)
    checks = []
    for name, fn, ref, args in (
        ("f16 add", f16core.add_array, ref_add, (a, b)),
        ("f16 mul", f16core.mul_array, ref_mul, (a, b)),
        ("f16 fma", f16core.fma_array, ref_fma, (a, b, c)),
    ):
        got = fn(*args)
        bad = int(np.count_nonzero(got != ref))
        checks.append(Check(name, bad == 0, f"{bad}/{count} mismatches"))
    lanes_ok = all(
        f16core.Half2.from_bits(int(w)).bits == int(w)
        for w in (gen_random(seed + 7, count, "raw") >> np.uint64(32)).tolist()
    )
    checks.append(Check("half2 lane roundtrip", lanes_ok))
    return checks


def random_weight(seed: int, k: int, n: int, g: int, with_perm: bool) -> gptq_format.QuantizedWeight:
    return make_problem(seed, 1, k, n, g, "seeded-shuffle" if with_perm else "none").B


def check_format(seed: int, count: int) -> Check:
    shapes = ((8, 8, 8), (16, 8, 8), (64, 16, 32), (40, 24, 8), (128, 64, 128))
    for i, draw in enumerate(splitmix64(seed, count).tolist()):
        k, n, g = shapes[i % len(shapes)]
        w = random_weight(draw, k, n, g, with_perm=bool(i % 2))
        q, s, z, perm = gptq_format.unpack(w)
        if gptq_format.pack(q, s, z, g, perm) != w:
            return Check("format roundtrip", False, f"pack/unpack differs for container {i}")
        if gptq_format.deserialize(gptq_format.to_bytes(w)) != w:
            return Check("format roundtrip", False, f"serialize/deserialize differs for container {i}")
    return Check("format roundtrip", True, f"{count} containers")


def check_weight_files(cfg: RunConfig, weights_dir) -> list[Check]:
    checks = []
    for i in range(len(cfg.shapes)):
        path = Path(weights_dir) / f"{bench.shape_id(i)}.gq4s"
        try:
            w = gptq_format.deserialize(path)
            M, K, N, g = cfg.shapes[i]
            ok = (w.k, w.n, w.group_size) == (K, N, g)
            checks.append(Check(f"weights {path.name}", ok, "" if ok else "dimensions differ from config"))
        except (QGemmLabError, OSError) as exc:
            checks.append(Check(f"weights {path.name}", False, f"{type(exc).__name__}: {exc}"))
    return checks


def run_verify(cfg: RunConfig, weights_dir=None, strict: bool = False, f16_cases: int = 10_000) -> list[Check]:
    checks = check_f16core(cfg.seed, f16_cases)
    checks.append(check_format(cfg.seed, 100))
    if weights_dir is not None:
        checks.extend(check_weight_files(cfg, weights_dir))
        if not all(c.ok for c in checks):
            return checks
    report = bench.run_matrix(cfg, weights_dir)
    checks.append(Check("counters equal predictions", all(r["counters_match"] for r in report["rows"])))
    checks.append(Check("bit-exact vs canonical fp16 oracle", all(r["bit_exact_canonical"] for r in report["rows"])))
    over = [f for f in report["failures"] if "exceeds tolerance" in f]
    checks.append(Check("error vs binary32 oracle within tolerance", not over, "; ".join(over[:3])))
    for shape in report["shapes"]:
        diff, tol = shape["smb_vs_baseline_max_abs_diff"], shape["tolerance"]
        checks.append(Check(f"{shape['shape_id']} smb vs baseline reordering", diff <= tol,
                            f"max diff {diff:.6e}, tolerance {tol:.6e}"))
    if report["warnings"]:
        checks.append(Check("tolerance warnings", not strict, "; ".join(report["warnings"][:3])))
    again = bench.run_matrix(cfg, weights_dir)
    checks.append(Check("determinism", bench.render_json(again) == bench.render_json(report)))
    return checks
