"""Time the compiled kernels against their numpy fallbacks on identical inputs.

    python3 benchmarks/bench_kernels.py --n 200000 --repeat 5

With ``--end-to-end`` it also times honest protocol runs in two subprocesses,
one with RELCOMMIT_NO_NUMBA=1.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from relcommit import kernels


def make_inputs(n, seed):
    rng = np.random.default_rng(seed)
    times = np.cumsum(rng.integers(1_000, 40_000, n)).astype(np.int64)
    fire0 = rng.random(n) < 0.5
    fire1 = rng.random(n) < 0.5
    coin = rng.integers(0, 2, n).astype(np.int8)
    psi = np.linspace(0.0, 2.8, n)
    return {
        "dead_time": (times, fire0, fire1, 30_000),
        "postselect": (times, fire0, fire1, coin, 60_000, False, 60_000, False),
        "reach": (psi, 9300.0, 12300.0, 2.8798, 27_000.0, 30_000.0, 15_000.0),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=0.0)


def bench_kernels(n, repeat, seed):
    if not kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
    inputs = make_inputs(n, seed)
    print(f"{'kernel':<12}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}  match")
    for name, args in inputs.items():
        py = kernels.PY_KERNELS[name]
        t_py = min(timeit.repeat(lambda: py(*args), number=1, repeat=repeat)) * 1e3
        if kernels.HAVE_NUMBA:
            jit = kernels.JIT_KERNELS[name]
            jit(*args)  # compile outside the timed region
            t_jit = min(timeit.repeat(lambda: jit(*args), number=1, repeat=repeat)) * 1e3
            ok = same(py(*args), jit(*args))
            print(f"{name:<12}{t_py:>12.3f}{t_jit:>12.3f}{t_py / t_jit:>10.1f}  {ok}")
        else:
            print(f"{name:<12}{t_py:>12.3f}{'-':>12}{'-':>10}  -")


_RUNS = """
import time
from relcommit import *
from relcommit.protocol import run_honest_protocol
src, det, params, layout = SourceParams(), DetectorModel(), SecurityParams(), ProtocolLayout()
run_honest_protocol(layout, src, det, params, 0, 0)
t = time.perf_counter()
for i in range({runs}):
    run_honest_protocol(layout, src, det, params, i % 2, i)
print(USE_NUMBA, (time.perf_counter() - t) / {runs} * 1e3)
"""


def bench_end_to_end(runs):
    for flag in ("0", "1"):
        env = dict(os.environ, RELCOMMIT_NO_NUMBA=flag)
        res = subprocess.run(
            [sys.executable, "-c", _RUNS.format(runs=runs)], env=env, capture_output=True, text=True, check=True
        )
        jit, ms = res.stdout.split()
        print(f"honest run, numba={jit:<5} {float(ms):8.2f} ms/run")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="events per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true")
    ap.add_argument("--runs", type=int, default=50)
    args = ap.parse_args()
    bench_kernels(args.n, args.repeat, args.seed)
    if args.end_to_end:
        bench_end_to_end(args.runs)


if __name__ == "__main__":
    main()
