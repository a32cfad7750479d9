"""Benchmark the compiled simulation kernel against the pure-Python fallback.

Runs identical seeded scenes through both implementations, checks the
trajectories agree bit for bit, and reports wall-clock timings.

Usage: python3 benchmarks/bench_kernels.py [--scenes N] [--repeats R]
"""

import argparse
import time

from puzzlerl.rng import make_rng
from puzzlerl.sim import Scene, circle, segment
from puzzlerl.sim import kernel_py
from puzzlerl.sim.engine import run_kernel


def make_scene(seed: int) -> Scene:
    rng = make_rng("bench", seed)
    bodies = []
    for k in range(4):
        bodies.append(circle(
            k, "red-ball",
            float(rng.uniform(0.8, 7.2)), float(rng.uniform(2.0, 7.2)),
            r=float(rng.uniform(0.2, 0.45)),
            vx=float(rng.uniform(-2, 2)), vy=float(rng.uniform(-1, 1)),
        ))
    bodies.append(segment(10, "static", 0.5, 2.0, 7.5, 1.0))
    bodies.append(segment(11, "static", 0.5, 4.5, 4.0, 4.0))
    return Scene(env="griddrop", bodies=tuple(bodies))


def time_kernel(kernel, scenes, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for sc in scenes:
            run_kernel(sc, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    try:
        from puzzlerl.sim import _kernel as compiled
    except ImportError:
        print("compiled kernel not available; build the extension first")
        return 1

    scenes = [make_scene(s) for s in range(args.scenes)]

    mismatches = 0
    total_steps = 0
    for sc in scenes:
        _, _, r1 = run_kernel(sc, kernel=kernel_py)
        _, _, r2 = run_kernel(sc, kernel=compiled)
        total_steps += r1["steps"]
        if r1["steps"] != r2["steps"]:
            mismatches += 1
            continue
        n = r1["steps"]
        for key in ("bx", "by", "bvx", "bvy"):
            if any(r1[key][n][i] != float(r2[key][n][i]) for i in range(len(r1[key][n]))):
                mismatches += 1
                break

    t_py = time_kernel(kernel_py, scenes, args.repeats)
    t_c = time_kernel(compiled, scenes, args.repeats)

    print(f"scenes                 {args.scenes}")
    print(f"total simulated steps  {total_steps}")
    print(f"trajectory mismatches  {mismatches}")
    print(f"pure python            {t_py * 1e3:10.2f} ms")
    print(f"compiled               {t_c * 1e3:10.2f} ms")
    print(f"speedup                {t_py / t_c:10.1f}x")
    return 0 if mismatches == 0 else 2


if __name__ == "__main__":
    raise SystemExit(main())
