"""Timing comparison between the compiled kernels and their numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py --repeats 50

The numba implementations are compiled on first call, so each kernel gets a
warmup before timing. Set PARTCRAFT_NO_NUMBA=1 to check what the fallback
path costs on its own (the table then has a single column).
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from partcraft import _kernels as kernels


def _time(fn, args, repeats: int, warmup: int = 3) -> tuple[float, float]:
    for _ in range(warmup):
        fn(*args)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    spread = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return statistics.mean(samples), spread


def _cases() -> list[tuple[str, str, str, tuple]]:
    rng = np.random.default_rng(0)
    u = rng.random((1024, 3))
    src = rng.random((64, 64))
    points = rng.random((1024, 5))
    centers = np.ascontiguousarray(points[:5])
    masks = (rng.random((6, 32, 32)) < 0.3).astype(np.float64)
    preds = rng.standard_normal((6, 3, 32, 32))
    return [
        ("field_affinity (1024x3)", "_field_affinity_nb", "_field_affinity_np", (u, 0.02)),
        ("area_average_resize (64->32)", "_area_resize_nb", "_area_resize_np", (src, 32, 32)),
        ("kmeans_lloyd (1024x5, k=5)", "_kmeans_lloyd_nb", "_kmeans_lloyd_np", (points, centers, 300, 1e-10)),
        ("masked_sum (6x3x32x32)", "_masked_sum_nb", "_masked_sum_np", (masks, preds)),
    ]


def _fmt(mean: float, spread: float) -> str:
    return f"{mean * 1e3:8.3f} ± {spread * 1e3:6.3f} ms"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; timing the numpy fallbacks only\n")
        print(f"{'kernel':<30} {'numpy':>22}")
        for name, _, np_name, call_args in _cases():
            mean, spread = _time(getattr(kernels, np_name), call_args, args.repeats)
            print(f"{name:<30} {_fmt(mean, spread):>22}")
        return 0

    print(f"{'kernel':<30} {'numba':>22} {'numpy':>22} {'speedup':>9}")
    for name, nb_name, np_name, call_args in _cases():
        nb_fn = getattr(kernels, nb_name)
        np_fn = getattr(kernels, np_name)
        nb_out = nb_fn(*call_args)
        np_out = np_fn(*call_args)
        if isinstance(nb_out, tuple):
            agree = max(
                float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))
                for a, b in zip(nb_out, np_out)
            )
        else:
            agree = float(np.max(np.abs(nb_out - np_out)))
        if agree > 1e-10:
            raise SystemExit(f"{name}: implementations disagree by {agree:.2e}")
        nb_mean, nb_spread = _time(nb_fn, call_args, args.repeats)
        np_mean, np_spread = _time(np_fn, call_args, args.repeats)
        speedup = np_mean / nb_mean if nb_mean > 0 else float("inf")
        print(
            f"{name:<30} {_fmt(nb_mean, nb_spread):>22}"
            f" {_fmt(np_mean, np_spread):>22} {speedup:>8.2f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
