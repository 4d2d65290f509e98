"""Compare the numba and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Labeling runs on the slice-band grid of a 2D problem; RK4 integrates a
batch of cubic-field trajectories.  Numba timings exclude the first
(compiling) call.
"""

import argparse
import time

import numpy as np

from lyapta import _kernels
from lyapta.system import VectorField


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def label_case(n_side):
    x = np.linspace(-1.25, 1.25, n_side)
    X, Y = np.meshgrid(x, x, indexing="ij")
    # four quadrant-like bands plus rings
    codes = (np.digitize(X ** 2, [0.25, 1.0]) * 3 + np.digitize(Y ** 2, [0.25, 1.0])).astype(np.int64)
    return codes.ravel(), (n_side, n_side)


def rk4_case(batch):
    field = VectorField.polynomial([[(-1.0, [1, 0]), (1.0, [0, 1])], [(-1.0, [1, 0]), (-1.0, [0, 3])]])
    X0 = np.random.default_rng(0).uniform(-1, 1, (batch, 2))
    return X0, np.linspace(0.0, 2.0, 21), 1e-3, field.as_terms()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy backend is available")
        return
    rows = []
    for n_side in (101, 251, 501):
        codes, shape = label_case(n_side)
        ref = _kernels.label_components(codes, shape, backend="numba")
        assert np.array_equal(ref, _kernels.label_components(codes, shape, backend="numpy"))
        tn = best_of(lambda: _kernels.label_components(codes, shape, backend="numpy"), args.repeat)
        tj = best_of(lambda: _kernels.label_components(codes, shape, backend="numba"), args.repeat)
        rows.append((f"label {n_side}x{n_side}", tn, tj))
    for batch in (100, 1000):
        X0, t_out, dt, terms = rk4_case(batch)
        a = _kernels.rk4_integrate(X0, t_out, dt, *terms, backend="numba")
        b = _kernels.rk4_integrate(X0, t_out, dt, *terms, backend="numpy")
        assert np.abs(a - b).max() < 1e-12
        tn = best_of(lambda: _kernels.rk4_integrate(X0, t_out, dt, *terms, backend="numpy"), args.repeat)
        tj = best_of(lambda: _kernels.rk4_integrate(X0, t_out, dt, *terms, backend="numba"), args.repeat)
        rows.append((f"rk4 batch {batch}, 2000 steps", tn, tj))
    print(f"{'case':32s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}")
    for name, tn, tj in rows:
        print(f"{name:32s} {tn:10.4f} {tj:10.4f} {tn / tj:8.1f}")


if __name__ == "__main__":
    main()
