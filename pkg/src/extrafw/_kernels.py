"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin.  Set ``EXTRAFW_NO_NUMBA=1`` before import
to force the numpy path (also used automatically when numba is missing).
Both paths agree to rounding; bit-identity holds only within one backend.
"""
import os

import numpy as np

_DISABLED = os.environ.get("EXTRAFW_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference path

def csr_matvec_np(indptr, indices, data, x, n_rows):
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=n_rows)


def csr_rmatvec_np(indptr, indices, data, w, n_cols):
    n_rows = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    return np.bincount(indices, weights=data * w[rows], minlength=n_cols)


def coo_matvec_np(rows, cols, vals, x, m):
    return np.bincount(rows, weights=vals * x[cols], minlength=m)


def coo_rmatvec_np(rows, cols, vals, y, n):
    return np.bincount(cols, weights=vals * y[rows], minlength=n)


def rank1_gather_np(rows, cols, p, q):
    return p[rows] * q[cols]


def power_iteration_np(rows, cols, vals, m, n, q0, tol, max_iters):
    """Power iteration on G^T G for a COO matrix G (m x n).

    Returns (q, rayleigh, iterations, converged) where ``rayleigh`` estimates
    sigma_1(G)^2 and ``q`` is the unit right singular vector.
    """
    q = q0 / np.sqrt(np.dot(q0, q0))
    prev = -1.0
    rq = 0.0
    for it in range(1, max_iters + 1):
        p = np.bincount(rows, weights=vals * q[cols], minlength=m)
        z = np.bincount(cols, weights=vals * p[rows], minlength=n)
        rq = np.dot(p, p)
        nz = np.sqrt(np.dot(z, z))
        if nz == 0.0:
            return q, 0.0, it, True
        q = z / nz
        if prev > 0.0 and abs(rq - prev) <= tol * rq:
            return q, rq, it, True
        prev = rq
    return q, rq, max_iters, False


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def csr_matvec_nb(indptr, indices, data, x, n_rows):
        out = np.zeros(n_rows)
        for i in range(n_rows):
            s = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                s += data[e] * x[indices[e]]
            out[i] = s
        return out

    @njit(cache=True)
    def csr_rmatvec_nb(indptr, indices, data, w, n_cols):
        out = np.zeros(n_cols)
        n_rows = indptr.shape[0] - 1
        for i in range(n_rows):
            wi = w[i]
            if wi == 0.0:
                continue
            for e in range(indptr[i], indptr[i + 1]):
                out[indices[e]] += data[e] * wi
        return out

    @njit(cache=True)
    def coo_matvec_nb(rows, cols, vals, x, m):
        out = np.zeros(m)
        for e in range(rows.shape[0]):
            out[rows[e]] += vals[e] * x[cols[e]]
        return out

    @njit(cache=True)
    def coo_rmatvec_nb(rows, cols, vals, y, n):
        out = np.zeros(n)
        for e in range(rows.shape[0]):
            out[cols[e]] += vals[e] * y[rows[e]]
        return out

    @njit(cache=True)
    def rank1_gather_nb(rows, cols, p, q):
        out = np.empty(rows.shape[0])
        for e in range(rows.shape[0]):
            out[e] = p[rows[e]] * q[cols[e]]
        return out

    @njit(cache=True)
    def power_iteration_nb(rows, cols, vals, m, n, q0, tol, max_iters):
        nnz = rows.shape[0]
        q = q0 / np.sqrt(np.dot(q0, q0))
        p = np.zeros(m)
        z = np.zeros(n)
        prev = -1.0
        rq = 0.0
        for it in range(1, max_iters + 1):
            p[:] = 0.0
            for e in range(nnz):
                p[rows[e]] += vals[e] * q[cols[e]]
            z[:] = 0.0
            for e in range(nnz):
                z[cols[e]] += vals[e] * p[rows[e]]
            rq = np.dot(p, p)
            nz = np.sqrt(np.dot(z, z))
            if nz == 0.0:
                return q, 0.0, it, True
            q = z / nz
            if prev > 0.0 and abs(rq - prev) <= tol * rq:
                return q, rq, it, True
            prev = rq
        return q, rq, max_iters, False

    csr_matvec = csr_matvec_nb
    csr_rmatvec = csr_rmatvec_nb
    coo_matvec = coo_matvec_nb
    coo_rmatvec = coo_rmatvec_nb
    rank1_gather = rank1_gather_nb
    power_iteration = power_iteration_nb
else:
    csr_matvec = csr_matvec_np
    csr_rmatvec = csr_rmatvec_np
    coo_matvec = coo_matvec_np
    coo_rmatvec = coo_rmatvec_np
    rank1_gather = rank1_gather_np
    power_iteration = power_iteration_np
