"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

from tomoguard import _kernels_py
from tomoguard.metrics import _postorder_arrays
from tomoguard.topology import enumerate_topologies, random_tree, true_vector

try:
    from tomoguard import _kernels as _compiled
except ImportError:
    _compiled = None


def cases():
    T = random_tree(5, 3).scaled(1 / 500)
    x = true_vector(T)
    space = enumerate_topologies(T.leaves)
    big = random_tree(8, 4).scaled(1 / 500)
    S = true_vector(big).as_matrix()
    t1, t2 = random_tree(8, 5), random_tree(8, 6)
    codes = {v: i for i, v in enumerate(t1.leaves)}
    a = (*_postorder_arrays(t1, codes), *_postorder_arrays(t2, codes))
    return {
        "nnls_fit": lambda k: k.nnls_fit(T.informative_design, x.values, 0.0, 200, 1e-8),
        "batch_fit_losses": lambda k: k.batch_fit_losses(space.designs, x.values, 0.0, 200, 1e-8),
        "single_linkage_cophenetic": lambda k: k.single_linkage_cophenetic(S),
        "zhang_shasha": lambda k: k.zhang_shasha(*a),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':28s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases().items():
        n = 3
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=n, repeat=args.repeat)) / n * 1e3
        if _compiled is None:
            print(f"{name:28s} {py:10.3f} {'n/a':>10s} {'n/a':>8s}")
            continue
        cy = min(timeit.repeat(lambda: fn(_compiled), number=n, repeat=args.repeat)) / n * 1e3
        print(f"{name:28s} {py:10.3f} {cy:10.3f} {py / cy:8.1f}x")


if __name__ == "__main__":
    main()
