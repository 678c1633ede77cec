"""Linear minimization oracles: argmin_{x in C} <g, x> in closed form.

Ties are broken toward the lowest index and sgn(0) counts as +1, so every
oracle is a deterministic function of its input.
"""
import numpy as np

from . import _kernels
from .problem import (
    L1Ball, L2Ball, NSupportBall, NuclearBall, ObservedEntries, Simplex,
)

ZERO_TOL = 1e-15
PI_TOL = 1e-10
PI_MAX_ITERS = 500


class ZeroGradient(ArithmeticError):
    """The linear objective vanishes; every feasible point is a minimizer."""


class NoConvergence(RuntimeError):
    pass


class UnsupportedConstraint(ValueError):
    pass


class RankOneAtom:
    """The matrix ``scale * p q^T`` with unit vectors p and q."""

    __slots__ = ("scale", "p", "q")

    def __init__(self, scale, p, q):
        self.scale = float(scale)
        self.p = p
        self.q = q

    @property
    def shape(self):
        return (self.p.size, self.q.size)

    def on_support(self, rows, cols):
        return self.scale * _kernels.rank1_gather(rows, cols, self.p, self.q)

    def materialize(self):
        return self.scale * np.outer(self.p, self.q)

    def __repr__(self):
        return f"RankOneAtom(scale={self.scale:g}, shape={self.shape})"


def _scaled_direction(t, R):
    # shared by the l2 and n-support oracles so that n == d bit-matches l2
    nrm = np.sqrt(np.dot(t, t))
    if not nrm >= ZERO_TOL:
        raise ZeroGradient
    return -(R / nrm) * t


def lmo_l2(g, R):
    return _scaled_direction(np.asarray(g, dtype=np.float64), R)


def lmo_l1(g, R):
    g = np.asarray(g, dtype=np.float64)
    a = np.abs(g)
    i = int(np.argmax(a))
    if not a[i] >= ZERO_TOL:
        raise ZeroGradient
    v = np.zeros_like(g)
    v[i] = -R if g[i] >= 0 else R
    return v


def lmo_simplex(g, R):
    g = np.asarray(g, dtype=np.float64)
    v = np.zeros_like(g)
    v[int(np.argmin(g))] = R
    return v


def top_n(g, n):
    """Keep the n largest-magnitude entries of g (lowest index wins ties)."""
    g = np.asarray(g, dtype=np.float64)
    if not 1 <= n <= g.size:
        raise ValueError(f"n must lie in [1, {g.size}], got {n}")
    if n == g.size:
        return g
    keep = np.argsort(-np.abs(g), kind="stable")[:n]
    t = np.zeros_like(g)
    t[keep] = g[keep]
    return t


def lmo_nsupport(g, n, R):
    return _scaled_direction(top_n(g, n), R)


def top_singular_pair(rows, cols, vals, shape, tol=PI_TOL, max_iters=PI_MAX_ITERS, rng=None):
    """Dominant singular triple (sigma, p, q) of a COO matrix by power iteration on G^T G.

    Stops when the Rayleigh quotient changes by at most ``tol`` relative;
    raises NoConvergence after ``max_iters`` iterations.  The sign is fixed
    so that the first nonzero entry of q is positive.
    """
    m, n = shape
    rng = np.random.default_rng(0) if rng is None else rng
    q0 = rng.standard_normal(n)
    q, rq, _, ok = _kernels.power_iteration(rows, cols, vals, m, n, q0, float(tol), int(max_iters))
    if not ok:
        raise NoConvergence(f"power iteration did not stabilize within {max_iters} iterations")
    p = _kernels.coo_matvec(rows, cols, vals, q, m)
    sigma = np.sqrt(np.dot(p, p))
    if sigma == 0.0:
        return 0.0, np.zeros(m), q
    p = p / sigma
    nz = np.flatnonzero(np.abs(q) > 1e-12 * np.abs(q).max())
    if q[nz[0]] < 0:
        p, q = -p, -q
    return float(sigma), p, q


def lmo_nuclear(G, R, pi_tol=PI_TOL, pi_max_iters=PI_MAX_ITERS, rng=None):
    """Rank-one atom -R p q^T from the top singular pair of the sparse matrix G."""
    if not isinstance(G, ObservedEntries):
        raise TypeError("lmo_nuclear expects an ObservedEntries gradient")
    if G.nnz == 0 or not np.abs(G.vals).max() >= ZERO_TOL:
        raise ZeroGradient
    _, p, q = top_singular_pair(G.rows, G.cols, G.vals, G.shape, pi_tol, pi_max_iters, rng)
    return RankOneAtom(-R, p, q)


def lanczos_singular_pair(rows, cols, vals, shape, rng=None):
    """Top singular triple via ARPACK, for spectra too clustered for power iteration.

    Same sign convention as :func:`top_singular_pair`; the start vector is
    drawn from ``rng`` so results stay reproducible.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.linalg import svds

    rng = np.random.default_rng(0) if rng is None else rng
    M = csr_matrix((vals, (rows, cols)), shape=shape)
    v0 = rng.standard_normal(min(shape))
    u, s, vt = svds(M, k=1, v0=v0, tol=0.0)
    p, q = u[:, 0], vt[0]
    nz = np.flatnonzero(np.abs(q) > 1e-12 * np.abs(q).max())
    if q[nz[0]] < 0:
        p, q = -p, -q
    return float(s[0]), p, q


def lmo_with_fallback(c, g, rng=None, retries=1):
    """:func:`lmo`, retrying power iteration from a fresh start and then
    falling back to Lanczos when the top of the spectrum is clustered."""
    for _ in range(retries + 1):
        try:
            return lmo(c, g, rng)
        except NoConvergence:
            pass
    _, p, q = lanczos_singular_pair(g.rows, g.cols, g.vals, g.shape, rng)
    return RankOneAtom(-c.radius, p, q)


def lmo(c, g, rng=None):
    """Dispatch to the oracle matching constraint set ``c``."""
    if isinstance(c, L2Ball):
        return lmo_l2(g, c.radius)
    if isinstance(c, L1Ball):
        return lmo_l1(g, c.radius)
    if isinstance(c, Simplex):
        return lmo_simplex(g, c.radius)
    if isinstance(c, NSupportBall):
        return lmo_nsupport(g, c.n, c.radius)
    if isinstance(c, NuclearBall):
        if getattr(g, "shape", None) != c.shape:
            raise ValueError(f"gradient shape {getattr(g, 'shape', None)} != constraint shape {c.shape}")
        return lmo_nuclear(g, c.radius, rng=rng)
    raise UnsupportedConstraint(type(c).__name__)


def lmo_bruteforce(g, c):
    """Test oracle: enumerate every vertex of an l1 ball or simplex."""
    g = np.asarray(g, dtype=np.float64)
    d = g.size
    if isinstance(c, L1Ball):
        # +R e_0, -R e_0, +R e_1, ... so the first minimizer follows the index tie rule
        verts = np.empty((2 * d, d))
        verts[0::2] = c.radius * np.eye(d)
        verts[1::2] = -c.radius * np.eye(d)
    elif isinstance(c, Simplex):
        verts = c.radius * np.eye(d)
    else:
        raise UnsupportedConstraint(f"brute force supports L1Ball and Simplex, not {type(c).__name__}")
    return verts[int(np.argmin(verts @ g))].copy()
