"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both backends are imported side by side, so EXTRAFW_NO_NUMBA does not
matter here.  Outputs are checked to agree before timing.
"""
import argparse
import timeit

import numpy as np

from extrafw import _kernels as kern
from extrafw.data_io import synth_logistic, synth_lowrank


def cases(rng):
    A = synth_logistic(0, 20000, 2000, sparsity=0.01).features
    x = rng.standard_normal(A.shape[1])
    w = rng.standard_normal(A.shape[0])
    K, _ = synth_lowrank(0, 1000, 1000, 5, 0.05)
    q0 = rng.standard_normal(K.shape[1])
    p = rng.standard_normal(K.shape[0])
    q = rng.standard_normal(K.shape[1])
    m, n = K.shape
    return {
        "csr_matvec": (A.indptr, A.indices, A.data, x, A.shape[0]),
        "csr_rmatvec": (A.indptr, A.indices, A.data, w, A.shape[1]),
        "coo_matvec": (K.rows, K.cols, K.vals, q, m),
        "coo_rmatvec": (K.rows, K.cols, K.vals, p, n),
        "rank1_gather": (K.rows, K.cols, p, q),
        "power_iteration": (K.rows, K.cols, K.vals, m, n, q0, 1e-10, 500),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':16s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, a in cases(rng).items():
        f_np = getattr(kern, name + "_np")
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat))
        if not kern.HAVE_NUMBA:
            print(f"{name:16s} {1e3 * t_np:10.3f} {'-':>10s} {'-':>8s}")
            continue
        f_nb = getattr(kern, name + "_nb")
        r_np, r_nb = f_np(*a), f_nb(*a)  # also compiles
        r_np = r_np[0] if isinstance(r_np, tuple) else r_np
        r_nb = r_nb[0] if isinstance(r_nb, tuple) else r_nb
        if not np.allclose(r_np, r_nb, rtol=1e-8, atol=1e-10):
            raise SystemExit(f"{name}: backends disagree")
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat))
        print(f"{name:16s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
