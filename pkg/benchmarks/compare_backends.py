"""Compare the pure-Python and compiled coordination kernels.

Runs each hot kernel on identical randomized workloads, checks that both
backends return identical results, and reports per-call timings plus the
speedup. Exits nonzero if only one backend is importable unless
--allow-single is given.

Usage:
    python benchmarks/compare_backends.py [--n 6] [--iters 2000] [--seed 1]
"""

from __future__ import annotations

import argparse
import random
import statistics
import sys
import time

from fedcoord._kernel import available_backends

TIME_MAX = 2**63 - 1
MICROSTEP_MAX = 2**32 - 1


def random_topology(rng: random.Random, n: int) -> list[int]:
    # flat n*n delay matrix, -1 = no connection
    alpha = [-1] * (n * n)
    for u in range(n):
        for d in range(n):
            if u == d or rng.random() < 0.55:
                continue
            alpha[u * n + d] = rng.choice([0, 0, 1_000_000, 5_000_000])
    return alpha


def random_tag_vector(rng: random.Random, n: int) -> list[int]:
    out = []
    for _ in range(n):
        if rng.random() < 0.1:
            out.extend([TIME_MAX, MICROSTEP_MAX])
        else:
            out.extend([rng.randrange(0, 10**9), rng.randrange(0, 4)])
    return out


def bench(fn, args_list, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        for args in args_list:
            fn(*args)
        best = min(best, (time.perf_counter_ns() - t0) / len(args_list))
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=6, help="federates per topology")
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--allow-single", action="store_true")
    args = ap.parse_args()

    backends = available_backends()
    if "compiled" not in backends and not args.allow_single:
        print("compiled backend unavailable; rerun with --allow-single", file=sys.stderr)
        return 1
    rng = random.Random(args.seed)

    workloads = {
        "tag_add": [
            (rng.randrange(0, 10**12), rng.randrange(0, 8), rng.choice([0, 0, 10**6]))
            for _ in range(args.iters)
        ],
        "eimt_solve": [],
        "rule1_grants": [],
    }
    for _ in range(max(1, args.iters // 10)):
        alpha = random_topology(rng, args.n)
        workloads["eimt_solve"].append((args.n, alpha, random_tag_vector(rng, args.n)))
        workloads["rule1_grants"].append(
            (args.n, alpha, random_tag_vector(rng, args.n), rng.randrange(args.n))
        )

    print(f"backends: {', '.join(sorted(backends))}")
    mismatches = 0
    for name, calls in workloads.items():
        results = {}
        for bname, mod in backends.items():
            fn = getattr(mod, name)
            results[bname] = [fn(*c) for c in calls]
        names = sorted(results)
        for a, b in zip(names, names[1:]):
            if results[a] != results[b]:
                mismatches += 1
                print(f"MISMATCH in {name}: {a} vs {b}")
        timings = {
            bname: bench(getattr(mod, name), calls) for bname, mod in backends.items()
        }
        line = f"{name:13s} " + "  ".join(
            f"{b}={timings[b]:9.1f} ns/call" for b in sorted(timings)
        )
        if "pure" in timings and "compiled" in timings:
            line += f"  speedup={timings['pure'] / timings['compiled']:.2f}x"
        print(line)
    if mismatches:
        print(f"{mismatches} result mismatches", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
