"""Time the compiled and numpy loss kernels on training-shaped batches.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from sata_lab import kernels

SHAPES = [  # (B, K, N, F)
    (64, 12, 16, 64),
    (64, 12, 0, 64),
    (512, 12, 50, 64),
    (8, 150, 50, 128),
]


def batch(B, K, N, F, seed=0):
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((B, F))
    P = rng.standard_normal((K, F))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    S = rng.standard_normal((B, N, F))
    if N:
        S /= np.linalg.norm(S, axis=2, keepdims=True)
    return E, rng.integers(0, K, B), P, S


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    names = kernels.available_backends()
    print(f"backends: {', '.join(names)} (active: {kernels.backend})")
    print(f"{'B':>5} {'K':>4} {'N':>3} {'F':>4} " + " ".join(f"{n + ' us':>12}" for n in names) + "   speedup")
    for B, K, N, F in SHAPES:
        E, y, P, S = batch(B, K, N, F)
        times = {}
        for name in names:
            fn = kernels.get_kernel(name)
            fn(E, y, P, S, 0.01, 0.5, 0.2, 0.2)
            best = min(timeit.repeat(lambda: fn(E, y, P, S, 0.01, 0.5, 0.2, 0.2), number=1, repeat=args.repeat))
            times[name] = best * 1e6
        speed = f"{times['python'] / times['cython']:8.2f}x" if "cython" in times else "       -"
        print(f"{B:>5} {K:>4} {N:>3} {F:>4} " + " ".join(f"{times[n]:>12.1f}" for n in names) + "  " + speed)


if __name__ == "__main__":
    main()
