"""Time the numba-compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``QGEMM_LAB_NO_JIT``. Outputs and counters are compared so
the speedup is only reported for identical results.

    python3 benchmarks/bench_backends.py [--shape M K N g] [--repeat R]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = """
import hashlib, json, sys, time
from qgemm_lab import _jit, f16core
from qgemm_lab.kernels import ALL_VARIANTS, TileParams, gemm_half_q_half
from qgemm_lab.rng import gen_random, make_problem

M, K, N, g, repeat = (int(x) for x in sys.argv[1:6])
p = make_problem(0, M, K, N, g)
tile = TileParams()
gemm_half_q_half(p, tile, ALL_VARIANTS[0])  # compile or warm caches outside the timed region
digest = hashlib.sha256()
start = time.perf_counter()
for _ in range(repeat):
    for flags in ALL_VARIANTS:
        c, n = gemm_half_q_half(p, tile, flags)
        digest.update(c.tobytes())
        digest.update(n.to_array().tobytes())
gemm_s = (time.perf_counter() - start) / repeat

a, b, c = (gen_random(s, 200_000, "raw").astype("uint16") for s in (1, 2, 3))
f16core.fma_array(a[:10], b[:10], c[:10])
start = time.perf_counter()
out = f16core.fma_array(a, b, c)
fma_s = time.perf_counter() - start
digest.update(out.tobytes())
print(json.dumps({"jit": _jit.HAVE_NUMBA, "gemm_s": gemm_s, "fma_s": fma_s, "digest": digest.hexdigest()}))
"""


def run_backend(no_jit: bool, shape, repeat: int) -> dict:
    env = dict(os.environ, QGEMM_LAB_NO_JIT="1" if no_jit else "0")
    args = [sys.executable, "-c", WORKER, *map(str, shape), str(repeat)]
    proc = subprocess.run(args, env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--shape", nargs=4, type=int, default=(1, 256, 16, 128), metavar=("M", "K", "N", "g"))
    parser.add_argument("--repeat", type=int, default=1)
    args = parser.parse_args()

    jit = run_backend(False, args.shape, args.repeat)
    py = run_backend(True, args.shape, args.repeat)
    if not jit["jit"]:
        print("numba unavailable: both runs used the fallback")
    same = jit["digest"] == py["digest"]
    print(f"shape M,K,N,g = {tuple(args.shape)}; 8 variants per pass")
    print(f"{'task':<26}{'numba s':>12}{'fallback s':>14}{'speedup':>10}")
    for key, label in (("gemm_s", "GEMM, all variants"), ("fma_s", "200k binary16 FMAs")):
        print(f"{label:<26}{jit[key]:>12.4f}{py[key]:>14.4f}{py[key] / jit[key]:>9.1f}x")
    print("results identical" if same else "RESULTS DIFFER between backends")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
