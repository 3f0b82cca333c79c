"""Time one optimization run on the compiled loop and on the NumPy loop.

    python benchmarks/bench_backends.py [--iterations 2000] [--repeat 5]

The first numba call compiles (or loads the on-disk cache); it is run once
as warm-up and reported separately.
"""

import argparse
import time

import numpy as np

from srkcd import OptimizerConfig, StepSchedule, generate_nonconvex, generate_quadratic, run
from srkcd._kernels import HAVE_NUMBA

CASES = [
    ("quadratic N=1000 d=50, s=5, batch 32", lambda: generate_quadratic(1000, 50, 0), 5, 32),
    ("quadratic N=1000 d=50, s=1, full batch", lambda: generate_quadratic(1000, 50, 0), 1, None),
    ("nonconvex N=1000 d=10, s=3, batch 32", lambda: generate_nonconvex(1000, 10, 0), 3, 32),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; install the 'fast' extra to compare backends")

    print(f"{'case':42s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, make, s, batch in CASES:
        p = make()
        cfg = OptimizerConfig(s=s, schedule=StepSchedule.harmonic(5.0, 100.0), max_iterations=args.iterations,
                              record_every=100, batch_size=batch)
        w1 = np.ones(p.dim)
        t0 = time.perf_counter()
        fast = run(cfg, p, w1, seed=0, backend="numba")
        warm = time.perf_counter() - t0
        slow = run(cfg, p, w1, seed=0, backend="numpy")
        diff = float(np.max(np.abs(fast.losses - slow.losses) / np.abs(slow.losses)))
        t_np = best_of(lambda: run(cfg, p, w1, seed=0, backend="numpy"), args.repeat)
        t_nb = best_of(lambda: run(cfg, p, w1, seed=0, backend="numba"), args.repeat)
        print(f"{name:42s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.1f}x {diff:13.1e}  (first numba call {warm:.2f}s)")


if __name__ == "__main__":
    main()
