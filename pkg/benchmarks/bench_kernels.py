"""Compare the compiled and NumPy simulation kernels on the same trial batch.

Usage: python benchmarks/bench_kernels.py [--trials 8] [--iterations 2000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from sparsediff import algorithms as alg, experiments as ex, kernels
from sparsediff.signal import generate_trial_data


def batch(spec, trials):
    data = [generate_trial_data(spec.profile, spec.schedule, spec.iterations, spec.master_seed, t) for t in range(trials)]
    return np.stack([d.x_pad for d in data]), np.stack([d.d for d in data])


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=8)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cases = {
        "5 nodes, M=5 (ATC-LZA)": (ex.scenario_43(), alg.atc("za", 0.03, 0.001, 0.001)),
        "20 nodes, M=64 (ATC-LRZA)": (ex.scenario_41(), alg.atc("rza", 0.01, 0.002, 0.0005, 1.0)),
        "20 nodes, M=64 (CTA-LZA)": (ex.scenario_41(), alg.cta("za", 0.01, 0.002, 0.0005)),
    }
    if kernels.BACKEND != "cython":
        print("compiled kernel unavailable; timing the NumPy kernel only")
    print(f"{'case':28s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, (spec, variant) in cases.items():
        spec = spec.replace(iterations=args.iterations)
        x, d = batch(spec, args.trials)
        run = lambda backend: alg.simulate(variant, spec.combiner, spec.schedule, x, d, backend=backend)[0]
        t_py, ref = best_of(lambda: run("python"), args.repeat)
        if kernels.BACKEND == "cython":
            t_cy, out = best_of(lambda: run("cython"), args.repeat)
            diff = float(np.max(np.abs(out - ref) / np.abs(ref)))
            print(f"{name:28s} {t_py:10.3f} {t_cy:11.3f} {t_py / t_cy:8.1f} {diff:13.2e}")
        else:
            print(f"{name:28s} {t_py:10.3f} {'-':>11s} {'-':>8s} {'-':>13s}")


if __name__ == "__main__":
    main()
