"""Time the hot kernels under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Reports the best-of-N wall time per kernel and the speedup. The first numba
call is excluded (compilation, or loading the on-disk cache).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from labelgrain import _kernels
from labelgrain.hierarchy import grid_hierarchy
from labelgrain.trainer import ModelConfig, draw_dropout_mask, init_model


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def epoch_case(n, dim, hidden, k, dropout):
    rng = np.random.default_rng(0)
    mc = ModelConfig(dim, k, hidden, dropout_rate=dropout)
    model = init_model(mc, 0)
    X = rng.standard_normal((n, dim))
    y = rng.integers(0, k, n)
    order = rng.permutation(n)
    mask = draw_dropout_mask(dropout, (n, mc.layer_sizes[-2]), rng) if dropout else np.zeros((0, 0))

    def run(backend):
        weights = [w.copy() for w in model.weights]
        biases = [b.copy() for b in model.biases]
        vel_w = [np.zeros_like(w) for w in weights]
        vel_b = [np.zeros_like(b) for b in biases]
        fn = getattr(_kernels, f"sgd_epoch_{backend}")
        return lambda: fn(weights, biases, vel_w, vel_b, X, y, order, 32, 0.01, 0.9, 5e-4, mask)

    return run


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return 1

    rng = np.random.default_rng(1)
    h = grid_hierarchy(20, 5)
    true, pred = rng.integers(0, 100, 200_000), rng.integers(0, 100, 200_000)
    counts = rng.integers(0, 50, (100, 100))
    cases = {
        "sgd epoch, 300 x 16 -> [32] -> 10": epoch_case(300, 16, (32,), 10, 0.0),
        "sgd epoch, 6000 x 64 -> [32] -> 100": epoch_case(6000, 64, (32,), 100, 0.0),
        "sgd epoch, 2000 x 32 -> [64, 32] -> 10, dropout": epoch_case(2000, 32, (64, 32), 10, 0.3),
        "confusion tally, 200k labels, k=100": lambda b: (
            lambda: getattr(_kernels, f"tally_confusion_{b}")(true, pred, 100)),
        "ACR pair sums, k=100": lambda b: (lambda: getattr(_kernels, f"pair_sums_{b}")(counts, h.mapping)),
    }
    print(f"{'kernel':<50} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, make in cases.items():
        make("numba")()  # warm-up: compile or load cache
        t_np = best_time(make("numpy"), args.repeat)
        t_nb = best_time(make("numba"), args.repeat)
        print(f"{name:<50} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
