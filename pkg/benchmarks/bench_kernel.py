"""Time the compiled and pure-Python trial kernels on the two-state plant.

    python benchmarks/bench_kernel.py [--steps N] [--repeat K]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lqgrate import kernel
from lqgrate.loop import LoopDesign, run_trial
from lqgrate.lqr import PlantModel, min_cost, solve_dare


def two_state_design() -> LoopDesign:
    A = np.array([[1.1, 0.2], [0.0, 0.8]])
    I = np.eye(2)
    model = PlantModel(A, I, I, I, I, I)
    return LoopDesign.synthesize(model, 2.0 * min_cost(model, solve_dare(model)))


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=50_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    design = two_state_design()
    results = {}
    outputs = {}
    for name in sorted(kernel.BACKENDS):
        runs = 1 if name == "python" else args.repeat
        outputs[name] = run_trial(design, args.steps, backend=name)
        results[name] = best_of(lambda name=name: run_trial(design, args.steps, backend=name), runs)

    print(f"steps per trial: {args.steps} (+ burn-in)")
    for name, seconds in results.items():
        print(f"{name:>9}: {seconds:8.4f} s  {1e6 * seconds / args.steps:8.3f} us/step")
    if len(results) == 2:
        same = all(np.array_equal(outputs["compiled"][k], outputs["python"][k])
                   for k in ("cost", "bits", "sum_xx"))
        print(f"speedup: {results['python'] / results['compiled']:.1f}x, identical outputs: {same}")


if __name__ == "__main__":
    main()
