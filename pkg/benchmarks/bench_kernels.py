"""Compiled vs pure-numpy kernels on tagger-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N time per call for each kernel and backend, the speedup,
and the largest output disagreement between the two backends.
"""

import argparse
import time

import numpy as np

from densetag import kernels


def workloads(rng):
    # a 25-word sentence, 17 BIOES labels, batch of 10 with 150 hidden units
    steps, k, batch, hidden = 25, 17, 10, 150
    em, tr = rng.normal(size=(steps, k)), rng.normal(size=(k, k))
    st, sp = rng.normal(size=k), rng.normal(size=k)
    pre, c = rng.normal(size=(batch, 4 * hidden)), rng.normal(size=(batch, hidden))
    _, _, act, tanh_c = kernels.BACKENDS["python"].lstm_cell_forward(pre, c)
    dh, dc = rng.normal(size=(batch, hidden)), rng.normal(size=(batch, hidden))
    return {
        "lstm_cell_forward": (pre, c),
        "lstm_cell_backward": (dh, dc, act, tanh_c, c),
        "crf_forward": (em, tr, st, sp),
        "crf_marginals": (em, tr, st, sp),
        "viterbi": (em, tr, st, sp),
    }


def best_time(fn, args, repeat, inner=200):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t) / inner)
    return best


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if "compiled" not in kernels.BACKENDS:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    py, cc = kernels.BACKENDS["python"], kernels.BACKENDS["compiled"]
    print(f"{'kernel':<20}{'python us':>12}{'compiled us':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, inputs in workloads(np.random.default_rng(0)).items():
        inputs = tuple(np.ascontiguousarray(x, dtype=np.float64) for x in inputs)
        tp = best_time(getattr(py, name), inputs, args.repeat)
        tc = best_time(getattr(cc, name), inputs, args.repeat)
        diff = max_diff(getattr(py, name)(*inputs), getattr(cc, name)(*inputs))
        print(f"{name:<20}{tp * 1e6:>12.1f}{tc * 1e6:>14.1f}{tp / tc:>9.1f}x{diff:>13.1e}")


if __name__ == "__main__":
    main()
