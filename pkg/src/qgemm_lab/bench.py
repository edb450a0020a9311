"""Variant benchmark matrix: run, check against predictions and oracles, report.

CSV formatting is frozen so reports diff cleanly: counters are integers,
flags are ``0``/``1``, ``max_abs_err`` uses ``%.6e``, ``cost`` and every
``*_pct`` column use ``%.4f``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qgemm_lab import gptq_format, perf_model
from qgemm_lab.config import RunConfig, variant_label
from qgemm_lab.kernels import BASELINE, GemmProblem, VariantFlags, gemm_half_q_half, oracle_gemm_f16_canonical, oracle_gemm_f32
from qgemm_lab.kernels.bounds import running_error_bound
from qgemm_lab.rng import make_problem, splitmix64
from qgemm_lab.simt_sim import CounterSet, DeviceContext

COUNTER_COLUMNS = (
    "global_atomic",
    "global_load_16",
    "global_load_32",
    "valu_scalar",
    "valu_packed",
    "shared_read",
    "shared_write",
    "barriers",
)
CSV_COLUMNS = (
    ("shape_id", "M", "K", "N", "g", "smb", "vml", "ila")
    + COUNTER_COLUMNS
    + tuple(f"predicted_{c}" for c in COUNTER_COLUMNS)
    + (
        "counters_match",
        "max_abs_err",
        "bit_exact_canonical",
        "cost",
        "atomic_reduction_pct",
        "load_reduction_pct",
        "valu_reduction_pct",
        "cost_reduction_pct",
    )
)
WARN_FRACTION = 0.5
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"


def shape_id(i: int) -> str:
    return f"s{i}"


def shape_seed(cfg: RunConfig, i: int) -> int:
    return int(splitmix64(cfg.seed, len(cfg.shapes))[i])


def shape_problem(cfg: RunConfig, i: int, weights_dir=None) -> GemmProblem:
    M, K, N, g = cfg.shapes[i]
    problem = make_problem(shape_seed(cfg, i), M, K, N, g, cfg.perm_for(i))
    if weights_dir is None:
        return problem
    w = gptq_format.deserialize(Path(weights_dir) / f"{shape_id(i)}.gq4s")
    return GemmProblem(problem.A, w)


def max_threads() -> int:
    env = os.environ.get("QGEMM_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class ShapeResult:
    index: int
    perm_mode: str
    tolerance: float
    rows: list[dict] = field(default_factory=list)
    smb_vs_baseline_diff: float = 0.0


def _max_abs(c: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(c.view(np.float16).astype(np.float64) - ref.astype(np.float64))))


def _pct(base, opt) -> float:
    return perf_model.reduction_pct(base, opt)


def run_shape(cfg: RunConfig, i: int, weights_dir=None) -> ShapeResult:
    problem = shape_problem(cfg, i, weights_dir)
    M, K, N, g = problem.dims
    has_perm = problem.B.perm is not None
    ref = oracle_gemm_f32(problem)
    canonical = {smb: oracle_gemm_f16_canonical(problem, cfg.tile, VariantFlags(smb=smb)) for smb in (False, True)}
    if cfg.tolerance is not None:
        tol = cfg.tolerance
    else:
        tol = float(max(running_error_bound(problem, cfg.tile, smb).max() for smb in (False, True)))

    smb_only = VariantFlags(smb=True)
    variants = list(cfg.variants)
    variants += [f for f in (BASELINE, smb_only) if f not in variants]
    outputs = {}
    for flags in variants:
        outputs[flags] = gemm_half_q_half(problem, cfg.tile, flags, DeviceContext(), backend=cfg.backend)
    base_counters = outputs[BASELINE][1]
    base_cost = perf_model.cost_proxy(base_counters, cfg.weights)

    res = ShapeResult(i, cfg.perm_for(i), tol)
    for flags in cfg.variants:
        c, measured = outputs[flags]
        predicted = perf_model.predict(M, K, N, g, cfg.tile, flags, has_perm)
        _, match = perf_model.compare(measured, predicted)
        cost = perf_model.cost_proxy(measured, cfg.weights)
        row = {"shape_id": shape_id(i), "M": M, "K": K, "N": N, "g": g,
               "smb": int(flags.smb), "vml": int(flags.vml), "ila": int(flags.ila)}
        row.update({name: getattr(measured, name) for name in COUNTER_COLUMNS})
        row.update({f"predicted_{name}": getattr(predicted, name) for name in COUNTER_COLUMNS})
        row.update(
            counters_match=int(match),
            max_abs_err=_max_abs(c, ref),
            bit_exact_canonical=int(np.array_equal(c, canonical[flags.smb])),
            cost=cost,
            atomic_reduction_pct=_pct(base_counters.global_atomic, measured.global_atomic),
            load_reduction_pct=_pct(perf_model.a_load_transactions(base_counters), perf_model.a_load_transactions(measured)),
            valu_reduction_pct=_pct(perf_model.valu_instructions(base_counters), perf_model.valu_instructions(measured)),
            cost_reduction_pct=_pct(base_cost, cost),
        )
        res.rows.append(row)
    res.smb_vs_baseline_diff = _max_abs(outputs[smb_only][0], outputs[BASELINE][0].view(np.float16))
    return res


def row_problems(row: dict, tol: float) -> tuple[list[str], list[str]]:
    """``(failures, warnings)`` for one report row."""
    tag = f"{row['shape_id']}/{variant_label(VariantFlags(bool(row['smb']), bool(row['vml']), bool(row['ila'])))}"
    failures, warnings = [], []
    if not row["counters_match"]:
        failures.append(f"{tag}: counters differ from prediction")
    if not row["bit_exact_canonical"]:
        failures.append(f"{tag}: output not bit-exact against the canonical fp16 oracle")
    if row["max_abs_err"] > tol:
        failures.append(f"{tag}: max_abs_err {row['max_abs_err']:.6e} exceeds tolerance {tol:.6e}")
    elif row["max_abs_err"] > WARN_FRACTION * tol:
        warnings.append(f"{tag}: max_abs_err {row['max_abs_err']:.6e} above {WARN_FRACTION:g} x tolerance {tol:.6e}")
    return failures, warnings


def run_matrix(cfg: RunConfig, weights_dir=None) -> dict:
    """Run every (shape, variant) cell and assemble the report in config order."""
    with ThreadPoolExecutor(max_workers=min(max_threads(), len(cfg.shapes))) as pool:
        results = list(pool.map(lambda i: run_shape(cfg, i, weights_dir), range(len(cfg.shapes))))
    rows, failures, warnings, shapes = [], [], [], []
    for res in results:
        rows.extend(res.rows)
        shapes.append({"shape_id": shape_id(res.index), "seed": shape_seed(cfg, res.index),
                       "perm_mode": res.perm_mode, "tolerance": res.tolerance,
                       "smb_vs_baseline_max_abs_diff": res.smb_vs_baseline_diff})
        for row in res.rows:
            f, w = row_problems(row, res.tolerance)
            failures.extend(f)
            warnings.extend(w)
    return {
        "seed": cfg.seed,
        # the output location does not affect results, so reports written elsewhere stay byte-identical
        "config": {k: v for k, v in cfg.to_dict().items() if k != "output_dir"},
        "disclaimer": perf_model.PROXY_DISCLAIMER,
        "columns": list(CSV_COLUMNS),
        "shapes": shapes,
        "rows": rows,
        "failures": failures,
        "warnings": warnings,
    }


def _fmt(col: str, value) -> str:
    if col == "max_abs_err":
        return f"{value:.6e}"
    if col == "cost" or col.endswith("_pct"):
        return f"{value:.4f}"
    return str(value)


def render_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report["rows"]:
        writer.writerow([_fmt(col, row[col]) for col in CSV_COLUMNS])
    return buf.getvalue()


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report: dict, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / REPORT_CSV, out / REPORT_JSON
    csv_path.write_text(render_csv(report))
    json_path.write_text(render_json(report))
    return csv_path, json_path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def pack_weights(cfg: RunConfig, out_dir) -> list[tuple[str, Path, str]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(len(cfg.shapes)):
        w = shape_problem(cfg, i).B
        path = out / f"{shape_id(i)}.gq4s"
        gptq_format.serialize(w, path)
        written.append((shape_id(i), path, sha256_file(path)))
    return written


def counters_from_row(row: dict, predicted: bool = False) -> CounterSet:
    prefix = "predicted_" if predicted else ""
    return CounterSet(**{name: row[prefix + name] for name in CounterSet.names()})
