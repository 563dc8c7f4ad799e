"""Compare the compiled kernel backend against the numpy fallback.

Times the centroid-sum matvec on a few layer shapes, checks that both
backends produce bitwise-identical outputs, and prints a small table.
Run as: python3 benchmarks/compare_backends.py [--words N] [--repeat N]
"""

import argparse
import time

import numpy as np

from gobo import container, fixtures, kernel, quantize
from gobo._backend import available_backends, get_backend

SHAPES = ((256, 256), (768, 768), (1024, 4096))


def _time_backend(layer, acts, backend, mode, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernel.centroid_sum_matvec(layer, acts, accumulate=mode, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return out, best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--words", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--bits", type=int, default=3)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("compiled backend unavailable, timing the fallback only")

    header = f"{'shape':>12} {'mode':>6}"
    for b in backends:
        header += f" {b + ' (ms)':>14}"
    if len(backends) == 2:
        header += f" {'speedup':>8} {'bitwise':>8}"
    print(header)

    for rows, cols in SHAPES:
        w, _ = fixtures.planted_outlier_matrix(rows, cols, max(1, rows * cols // 1000))
        layer = quantize.quantize_gobo(w, bits=args.bits)
        rng = np.random.default_rng(fixtures.default_seed(1))
        acts = rng.normal(0.0, 1.0, (cols, args.words)).astype(np.float32)
        for mode in ("double", "single"):
            outs, times = [], []
            for b in backends:
                out, dt = _time_backend(layer, acts, b, mode, args.repeat)
                outs.append(out)
                times.append(dt)
            line = f"{f'{rows}x{cols}':>12} {mode:>6}"
            for dt in times:
                line += f" {dt * 1e3:>14.2f}"
            if len(backends) == 2:
                same = np.array_equal(outs[0].view(np.uint8), outs[1].view(np.uint8))
                line += f" {times[1] / times[0]:>7.2f}x {'yes' if same else 'NO':>8}"
                if not same:
                    print(line)
                    print("backend outputs differ, aborting")
                    return 1
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
