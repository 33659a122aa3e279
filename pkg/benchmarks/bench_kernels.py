"""Time the numba and pure-numpy kernels side by side and check they agree.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

The first numba call compiles (or loads from cache); that call is reported
separately and excluded from the timings.
"""
import argparse
import time

import numpy as np

from flma import kernels
from flma.correction import CertaintyThresholds, _rule_arrays, partition
from flma.mining import CA, CP, AssociationRule


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def knn_case(rng, scale):
    n = int(2000 * scale)
    ref = rng.normal(size=(n, 72))
    return "knn_indices", (ref, ref, 10, True), kernels.knn_indices_np, kernels.knn_indices_nb


def subset_case(rng, scale):
    n = int(5000 * scale)
    transactions = rng.integers(0, 1 << 12, n, dtype=np.int64)
    masks = np.arange(1, 1 << 12, dtype=np.int64)
    return "subset_counts", (transactions, masks), kernels.subset_counts_np, kernels.subset_counts_nb


def correct_case(rng, scale):
    m, c = int(20000 * scale), 14
    scores = rng.random((m, c))
    tags = partition(scores, CertaintyThresholds.fixed(0.3, 0.7)).tags
    rules = []
    for _ in range(300):
        perm = rng.permutation(c)
        rules.append(AssociationRule(tuple(sorted(perm[:2].tolist())),
                                     tuple(sorted(perm[2:4].tolist())),
                                     CP if rng.random() < 0.5 else CA, 0.5, rng.uniform(0.5, 1)))
    args = (scores, tags) + _rule_arrays(rules) + (1e-6,)
    return "correct_scores", args, kernels.correct_scores_np, kernels.correct_scores_nb


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    print(f"numba available: {kernels.HAVE_NUMBA}; default backend: {kernels.BACKEND}")
    print(f"{'kernel':<16}{'compile s':>11}{'numpy s':>11}{'numba s':>11}{'speedup':>9}  equal")
    for make in (knn_case, subset_case, correct_case):
        name, call_args, np_fn, nb_fn = make(rng, args.scale)
        start = time.perf_counter()
        nb_fn(*call_args)
        compile_s = time.perf_counter() - start
        t_np, r_np = best_of(lambda: np_fn(*call_args), args.repeat)
        t_nb, r_nb = best_of(lambda: nb_fn(*call_args), args.repeat)
        print(f"{name:<16}{compile_s:>11.3f}{t_np:>11.4f}{t_nb:>11.4f}{t_np / t_nb:>9.1f}  "
              f"{same(r_np, r_nb)}")


if __name__ == "__main__":
    main()
