"""Compare the compiled and pure-Python kernels.

Usage: python benchmarks/bench_kernels.py [--paths 2048] [--dt 0.005] [--repeat 3]
"""

import argparse
import time

import numpy as np

from degsde import kernels
from degsde.model import Segment, make_example_4_1
from degsde.simulate import SimGrid, brownian_block, simulate_batch


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=2048)
    parser.add_argument("--dt", type=float, default=0.005)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = kernels.available_backends()
    model, _ = make_example_4_1(eps=1.0)
    grid = SimGrid.from_times(1.5, model.r0, args.dt)
    xi = Segment.constant(model.r0, grid.n_hist, [1.0, 1.0])
    print(f"backends: {', '.join(backends)}; paths={args.paths}, steps={grid.n_steps}")

    results = {}
    for b in backends:
        t_rng, dB = best_of(lambda: brownian_block(7, 0, args.paths, grid.n_steps, 1, grid.dt, b), args.repeat)
        t_sim, (states, _) = best_of(lambda: simulate_batch(model, xi, grid, dB, b), args.repeat)
        results[b] = (dB, states)
        print(f"{b:>7}: normals {t_rng * 1e3:8.1f} ms   euler {t_sim * 1e3:8.1f} ms")

    if len(results) == 2:
        (dB0, s0), (dB1, s1) = results.values()
        print(f"increments identical: {np.array_equal(dB0, dB1)}")
        print(f"max state difference: {np.max(np.abs(s0 - s1)):.3e}")


if __name__ == "__main__":
    main()
