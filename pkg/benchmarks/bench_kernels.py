"""Compare the compiled kernels with the numpy fallback, and the direct match with the FFT match.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--svm-n 400]
"""

import argparse
import time

import numpy as np

from audiobank import _kernels_py
from audiobank.bank import Detector
from audiobank.classify import rbf_kernel
from audiobank.histfield import HistFieldParams, HistogramField
from audiobank.matching import match_direct, match_fft

try:
    from audiobank import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def random_field(rng, B, K, T):
    labels = rng.integers(0, B, size=(K, T))
    h = np.zeros((B, K, T))
    h[labels, np.arange(K)[:, None], np.arange(T)[None, :]] = 1.0
    noise = rng.random((B, K, T)) * 0.1
    h += noise
    return HistogramField(h / h.sum(axis=0, keepdims=True), HistFieldParams(B=B))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--svm-n", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    sig = random_field(rng, 8, 129, 256)
    det = Detector(id=0, class_id=0, field=random_field(rng, 8, 64, 32))
    a = np.ascontiguousarray(sig.sqrt())
    b = np.ascontiguousarray(det.sqrt_field)

    rows = [("correlate_valid numpy", best_of(lambda: _kernels_py.correlate_valid(a, b), args.repeat))]
    if _kernels_c is not None:
        rows.append(("correlate_valid cython", best_of(lambda: _kernels_c.correlate_valid(a, b), args.repeat)))
    t_direct = best_of(lambda: match_direct(sig, det), args.repeat)
    t_fft = best_of(lambda: match_fft(sig, det), args.repeat)
    rows += [("match_direct (active backend)", t_direct), ("match_fft", t_fft)]

    # SMO on a two-blob problem
    n = args.svm_n
    X = np.vstack([rng.normal(-1, 1, (n // 2, 10)), rng.normal(1, 1, (n - n // 2, 10))])
    y = np.r_[-np.ones(n // 2), np.ones(n - n // 2)]
    gram = rbf_kernel(X, X, 1.0 / (2 * 3.0 ** 2))
    order = rng.permutation(n).astype(np.intp)
    solve = lambda mod: mod.smo_solve(gram, y, 10.0, 1e-3, 100000, order)  # noqa: E731
    rows.append(("smo_solve numpy", best_of(lambda: solve(_kernels_py), args.repeat)))
    if _kernels_c is not None:
        rows.append(("smo_solve cython", best_of(lambda: solve(_kernels_c), args.repeat)))

    width = max(len(r[0]) for r in rows)
    for name, t in rows:
        print(f"{name:<{width}}  {t * 1e3:10.3f} ms")
    print(f"direct / fft speed ratio: {t_direct / t_fft:.1f}x")
    if _kernels_c is None:
        print("compiled extension not available; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
