"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Workloads match one training epoch of desk-scale MNIST augmentation
(10,000 sources x 2 views) and one kNN sweep (10,000 queries, k <= 15).
"""

import argparse
import timeit

import numpy as np

from simvae import kernels
from simvae.kernels import _pykernels

try:
    from simvae.kernels import _ckernels
except ImportError:
    _ckernels = None


def workloads(seed: int = 0):
    r = np.random.default_rng(seed)
    B = 20000
    images = r.random((B, 28, 28), dtype=np.float32)
    h = r.integers(12, 29, B)
    w = r.integers(12, 29, B)
    boxes = np.stack([r.integers(0, 29 - h), r.integers(0, 29 - w), h, w], 1)
    flips = r.integers(0, 2, B)
    labels = r.integers(0, 10, (10000, 15))
    dists = np.sort(r.random((10000, 15)), axis=1)
    return {
        "crop_resize (20000 views)": lambda impl: kernels.crop_resize_batch(images, boxes, flips, impl=impl),
        "knn_vote (10000 queries, k=1..15)": lambda impl: kernels.knn_vote(labels, dists, range(1, 16), 10,
                                                                          impl=impl),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    impls = {"python": _pykernels}
    if _ckernels is not None:
        impls["cython"] = _ckernels
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'workload':<36}" + "".join(f"{n:>12}" for n in impls) + ("     speedup" if len(impls) > 1 else ""))
    for name, fn in workloads().items():
        best = {n: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)) for n, impl in impls.items()}
        row = f"{name:<36}" + "".join(f"{1e3 * t:>10.1f}ms" for t in best.values())
        if len(best) > 1:
            row += f"{best['python'] / best['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
