"""``qgemm-lab`` command line.

Exit codes: 0 success, 1 a check failed, 3 bad input (config, shape or
weight-file errors). Every failure prints one ``ERROR <kind>: <message>``
line on stderr.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from qgemm_lab import bench
from qgemm_lab.config import RunConfig
from qgemm_lab.errors import QGemmLabError
from qgemm_lab.verify import run_verify

EXIT_FAIL = 1
EXIT_INPUT = 3


def _error(kind: str, message: str, code: int):
    click.echo(f"ERROR {kind}: {message}", err=True)
    sys.exit(code)


def _load_config(config, seed, out, tolerance=None) -> RunConfig:
    try:
        cfg = RunConfig.load(config) if config else RunConfig()
        return cfg.with_overrides(seed=seed, output_dir=out, tolerance=tolerance)
    except (QGemmLabError, ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        _error(type(exc).__name__, str(exc), EXIT_INPUT)


config_opt = click.option("--config", "config", type=click.Path(dir_okay=False), help="JSON run configuration.")
seed_opt = click.option("--seed", type=click.IntRange(0, (1 << 64) - 1), help="Override the configured seed.")
out_opt = click.option("--out", type=click.Path(file_okay=False), help="Output directory.")


@click.group()
def main():
    """Desk-scale lab for GPTQ 4-bit GEMM kernel optimizations on a simulated SIMT device."""


@main.command()
@config_opt
@seed_opt
@out_opt
def pack(config, seed, out):
    """Generate seeded weights for every configured shape and write GQ4S files."""
    cfg = _load_config(config, seed, out)
    try:
        written = bench.pack_weights(cfg, cfg.output_dir)
    except (QGemmLabError, OSError) as exc:
        _error(type(exc).__name__, str(exc), EXIT_INPUT)
    click.echo(f"seed {cfg.seed}")
    for sid, path, digest in written:
        click.echo(f"{sid} {path} sha256={digest}")


@main.command()
@config_opt
@seed_opt
@out_opt
@click.option("--weights", type=click.Path(file_okay=False, exists=True), help="Directory of GQ4S files from `pack`.")
@click.option("--tolerance", type=click.FloatRange(min=0), help="Override the error tolerance.")
@click.option("--strict", is_flag=True, help="Treat tolerance warnings as errors.")
def run(config, seed, out, weights, tolerance, strict):
    """Run the variant matrix and write report.csv and report.json."""
    cfg = _load_config(config, seed, out, tolerance)
    try:
        report = bench.run_matrix(cfg, weights)
    except (QGemmLabError, OSError) as exc:
        _error(type(exc).__name__, str(exc), EXIT_INPUT)
    csv_path, json_path = bench.write_report(report, cfg.output_dir)
    click.echo(f"seed {cfg.seed}")
    click.echo(f"wrote {csv_path} sha256={bench.sha256_file(csv_path)}")
    click.echo(f"wrote {json_path} sha256={bench.sha256_file(json_path)}")
    click.echo(report["disclaimer"])
    for w in report["warnings"]:
        click.echo(f"WARNING tolerance: {w}", err=True)
    problems = report["failures"] + (report["warnings"] if strict else [])
    if problems:
        for f in problems:
            click.echo(f"ERROR check: {f}", err=True)
        sys.exit(EXIT_FAIL)


@main.command()
@config_opt
@seed_opt
@click.option("--weights", type=click.Path(file_okay=False), help="Directory of GQ4S files to validate and use.")
@click.option("--tolerance", type=click.FloatRange(min=0), help="Override the error tolerance.")
@click.option("--strict", is_flag=True, help="Treat tolerance warnings as errors.")
def verify(config, seed, weights, tolerance, strict):
    """Run the invariant suite and print one PASS/FAIL line per check."""
    cfg = _load_config(config, seed, None, tolerance)
    try:
        checks = run_verify(cfg, weights, strict=strict)
    except (QGemmLabError, OSError) as exc:
        _error(type(exc).__name__, str(exc), EXIT_INPUT)
    for c in checks:
        click.echo(f"{'PASS' if c.ok else 'FAIL'} {c.name}" + (f": {c.detail}" if c.detail else ""))
    failed = [c for c in checks if not c.ok]
    click.echo(f"seed {cfg.seed}: {len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        for c in failed:
            click.echo(f"ERROR check: {c.name}" + (f": {c.detail}" if c.detail else ""), err=True)
        sys.exit(EXIT_FAIL)


@main.command()
@click.option("--out", type=click.Path(file_okay=False, exists=True), required=True, help="Directory holding report.json.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write the CSV here instead of stdout.")
def report(out, csv_path):
    """Re-render the CSV from a stored report.json."""
    try:
        stored = json.loads((Path(out) / bench.REPORT_JSON).read_text())
        text = bench.render_csv(stored)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        _error(type(exc).__name__, str(exc), EXIT_INPUT)
    if csv_path:
        Path(csv_path).write_text(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
