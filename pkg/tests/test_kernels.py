import os
import subprocess
import sys

import numpy as np
import pytest

from extrafw import _kernels as kern
from extrafw.data_io import synth_logistic, synth_lowrank

NAMES = ["csr_matvec", "csr_rmatvec", "coo_matvec", "coo_rmatvec", "rank1_gather", "power_iteration"]


def _args(rng):
    A = synth_logistic(0, 300, 40, sparsity=0.2).features
    K, _ = synth_lowrank(0, 30, 20, 3, 0.3)
    m, n = K.shape
    return {
        "csr_matvec": (A.indptr, A.indices, A.data, rng.standard_normal(40), 300),
        "csr_rmatvec": (A.indptr, A.indices, A.data, rng.standard_normal(300), 40),
        "coo_matvec": (K.rows, K.cols, K.vals, rng.standard_normal(n), m),
        "coo_rmatvec": (K.rows, K.cols, K.vals, rng.standard_normal(m), n),
        "rank1_gather": (K.rows, K.cols, rng.standard_normal(m), rng.standard_normal(n)),
        "power_iteration": (K.rows, K.cols, K.vals, m, n, rng.standard_normal(n), 1e-12, 5000),
    }


@pytest.mark.skipif(not kern.HAVE_NUMBA, reason="numba not installed or disabled")
@pytest.mark.parametrize("name", NAMES)
def test_backends_agree(name, rng):
    a = _args(rng)[name]
    r_np, r_nb = getattr(kern, name + "_np")(*a), getattr(kern, name + "_nb")(*a)
    if name == "power_iteration":
        assert r_np[3] and r_nb[3]
        assert r_np[1] == pytest.approx(r_nb[1], rel=1e-10)
        np.testing.assert_allclose(r_np[0], r_nb[0], atol=1e-5)
    else:
        np.testing.assert_allclose(r_np, r_nb, rtol=1e-12, atol=1e-12)


def test_numpy_kernels_match_dense(rng):
    K, _ = synth_lowrank(1, 12, 9, 2, 0.5)
    D = K.to_dense()
    x, y = rng.standard_normal(9), rng.standard_normal(12)
    np.testing.assert_allclose(kern.coo_matvec_np(K.rows, K.cols, K.vals, x, 12), D @ x, atol=1e-12)
    np.testing.assert_allclose(kern.coo_rmatvec_np(K.rows, K.cols, K.vals, y, 9), D.T @ y, atol=1e-12)
    q, rq, _, ok = kern.power_iteration_np(K.rows, K.cols, K.vals, 12, 9, rng.standard_normal(9), 1e-14, 10_000)
    assert ok and rq == pytest.approx(np.linalg.svd(D, compute_uv=False)[0] ** 2, rel=1e-10)


def test_env_flag_selects_numpy():
    env = dict(os.environ, EXTRAFW_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import extrafw; print(extrafw.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
