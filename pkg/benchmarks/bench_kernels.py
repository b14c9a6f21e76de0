"""Compare the numba-compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --sizes 16 32 64 --repeats 5

Kernel timings call both implementations directly in one process. The
end-to-end row runs ``metric_bundle`` in two subprocesses, one with
``NCPROBE_NO_JIT=1``, so it exercises the real dispatch.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ncprobe import _jit, _kernels

E2E_SNIPPET = """
import time, numpy as np
from ncprobe.core import FeatureMatrix
from ncprobe.metrics import metric_bundle
rng = np.random.default_rng(0)
k, d, n = {k}, {d}, {n}
fm = FeatureMatrix.from_arrays(rng.standard_normal((k * n, d)) + np.repeat(rng.standard_normal((k, d)) * 2, n, 0),
                               np.repeat(np.arange(k), n), k)
metric_bundle(fm)  # warm-up (and JIT compile)
t = time.perf_counter()
for _ in range({repeats}):
    metric_bundle(fm)
print((time.perf_counter() - t) / {repeats})
"""


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def sym_matrix(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    return a @ a.T


def e2e_seconds(no_jit, k, d, n, repeats):
    env = dict(os.environ, NCPROBE_NO_JIT="1" if no_jit else "0")
    code = E2E_SNIPPET.format(k=k, d=d, n=n, repeats=repeats)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--skip-e2e", action="store_true")
    args = p.parse_args(argv)

    if not _jit.HAS_NUMBA:
        print("numba is not installed; both columns time the same pure-Python loops")

    # compile once outside the timed region
    _kernels.jacobi_eigh_loops(sym_matrix(3, 0), 1e-14, 64)
    _kernels.power_iterate_loops(sym_matrix(3, 0), np.ones(3), 10, 1e-10)

    print(f"{'kernel':<14}{'n':>5}{'jit [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for n in args.sizes:
        s = sym_matrix(n, n)
        v0 = np.random.default_rng(n).standard_normal(n)
        rows = [
            ("jacobi_eigh", lambda: _kernels.jacobi_eigh_loops(s, 1e-14, 64),
             lambda: _kernels.jacobi_eigh_numpy(s, 1e-14, 64)),
            ("power_iterate", lambda: _kernels.power_iterate_loops(s, v0, 200, 0.0),
             lambda: _kernels.power_iterate_numpy(s, v0, 200, 0.0)),
        ]
        for name, jit_fn, np_fn in rows:
            tj, tn = best_of(jit_fn, args.repeats), best_of(np_fn, args.repeats)
            print(f"{name:<14}{n:>5}{tj * 1e3:>12.3f}{tn * 1e3:>12.3f}{tn / tj:>8.1f}x")

    if not args.skip_e2e:
        k, d, n = 10, 64, 50
        tj = e2e_seconds(False, k, d, n, args.repeats)
        tn = e2e_seconds(True, k, d, n, args.repeats)
        label = f"metric_bundle K={k} d={d} n_k={n}"
        print(f"{label}: jit {tj * 1e3:.2f} ms, numpy {tn * 1e3:.2f} ms, speedup {tn / tj:.1f}x")


if __name__ == "__main__":
    main()
