"""Core data types: sparse containers, constraint sets, iterates, objectives."""
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels

DEFAULT_TOL = 1e-9


class DimensionMismatch(ValueError):
    pass


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class SparseMatrix:
    """Row-compressed sparse matrix (N x d).

    Column indices are strictly increasing inside each row and every stored
    value is nonzero; both are checked on construction.
    """

    __slots__ = ("indptr", "indices", "data", "shape")

    def __init__(self, indptr, indices, data, shape, check=True):
        self.indptr = _frozen(indptr, np.int64)
        self.indices = _frozen(indices, np.int64)
        self.data = _frozen(data, np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if check:
            self._validate()

    def _validate(self):
        n, d = self.shape
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr must have length n_rows + 1 and start at 0")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != self.indices.size:
            raise ValueError("indptr is not a valid row pointer")
        if self.indices.size != self.data.size:
            raise ValueError("indices and data differ in length")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= d:
                raise ValueError("column index out of range")
            same_row = np.diff(self.row_ids()) == 0
            if np.any((np.diff(self.indices) <= 0) & same_row):
                raise ValueError("column indices must be strictly increasing within a row")
        if np.any(self.data == 0.0):
            raise ValueError("stored values must be nonzero")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("stored values must be finite")

    @classmethod
    def from_rows(cls, rows, n_cols):
        """Build from a list of (indices, values) pairs, dropping explicit zeros."""
        indptr = [0]
        idx, val = [], []
        for ind, v in rows:
            ind = np.asarray(ind, dtype=np.int64)
            v = np.asarray(v, dtype=np.float64)
            keep = v != 0.0
            idx.append(ind[keep])
            val.append(v[keep])
            indptr.append(indptr[-1] + int(keep.sum()))
        indices = np.concatenate(idx) if idx else np.zeros(0, np.int64)
        data = np.concatenate(val) if val else np.zeros(0)
        return cls(np.array(indptr), indices, data, (len(rows), n_cols))

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        return cls.from_rows([(np.flatnonzero(r), r[r != 0]) for r in a], a.shape[1])

    @property
    def nnz(self):
        return int(self.data.size)

    def row(self, i):
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.data[s:e]

    def row_ids(self):
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise DimensionMismatch(f"expected vector of length {self.shape[1]}, got {x.shape}")
        return _kernels.csr_matvec(self.indptr, self.indices, self.data, x, self.shape[0])

    def rmatvec(self, w):
        w = np.asarray(w, dtype=np.float64)
        return _kernels.csr_rmatvec(self.indptr, self.indices, self.data, w, self.shape[1])

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def take_rows(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return SparseMatrix.from_rows([self.row(i) for i in idx], self.shape[1])

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


class ObservedEntries:
    """Values on a fixed support K of an (m, n) matrix, stored as triplets.

    Also the container for matrix-completion gradients, which live on K.
    Scalar multiplication and addition are supported between instances that
    share the same support arrays.
    """

    __slots__ = ("rows", "cols", "vals", "shape")

    def __init__(self, rows, cols, vals, shape, check=True):
        self.rows = rows if not check else _frozen(rows, np.int64)
        self.cols = cols if not check else _frozen(cols, np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if check:
            self._validate()

    def _validate(self):
        m, n = self.shape
        if not (self.rows.shape == self.cols.shape == self.vals.shape) or self.rows.ndim != 1:
            raise ValueError("rows, cols and vals must be 1-d arrays of equal length")
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= m or self.cols.min() < 0 or self.cols.max() >= n:
                raise IndexError("observed entry outside the matrix shape")
            keys = self.rows * n + self.cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (i, j) entries")

    @classmethod
    def from_triplets(cls, triplets, shape):
        t = list(triplets)
        rows = np.array([a for a, _, _ in t], dtype=np.int64)
        cols = np.array([b for _, b, _ in t], dtype=np.int64)
        vals = np.array([c for _, _, c in t], dtype=np.float64)
        return cls(rows, cols, vals, shape)

    def with_values(self, vals):
        return ObservedEntries(self.rows, self.cols, vals, self.shape, check=False)

    @property
    def nnz(self):
        return int(self.vals.size)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def as_dict(self):
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.rows, self.cols, self.vals)}

    def _check_support(self, other):
        if other.rows is self.rows and other.cols is self.cols:
            return
        if not (np.array_equal(other.rows, self.rows) and np.array_equal(other.cols, self.cols)):
            raise DimensionMismatch("operands live on different supports")

    def __mul__(self, a):
        return self.with_values(self.vals * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.vals)

    def __add__(self, other):
        self._check_support(other)
        return self.with_values(self.vals + other.vals)

    def __sub__(self, other):
        self._check_support(other)
        return self.with_values(self.vals - other.vals)

    def __repr__(self):
        return f"ObservedEntries(shape={self.shape}, nnz={self.nnz})"


class LowRankIterate:
    """Matrix iterate kept as sum_i c_i p_i q_i^T plus its values on K.

    Never densified during a solve: mixing with an atom rescales the
    coefficients, appends the new factor pair and updates the K-cache as
    ``(1 - delta) * kvals + delta * atom|_K``.
    """

    __slots__ = ("shape", "rows", "cols", "coefs", "P", "Q", "kvals")

    def __init__(self, shape, rows, cols, coefs=(), P=(), Q=(), kvals=None):
        self.shape = (int(shape[0]), int(shape[1]))
        self.rows = rows
        self.cols = cols
        self.coefs = np.asarray(coefs, dtype=np.float64)
        self.P = list(P)
        self.Q = list(Q)
        self.kvals = np.zeros(rows.size) if kvals is None else kvals

    @classmethod
    def zero(cls, support):
        return cls(support.shape, support.rows, support.cols)

    @property
    def n_atoms(self):
        return len(self.P)

    def mix(self, other, delta):
        """Return (1 - delta) * self + delta * other for an atom or another iterate."""
        keep = 1.0 - delta
        if isinstance(other, LowRankIterate):
            o_coefs, o_P, o_Q, o_k = other.coefs, other.P, other.Q, other.kvals
        else:
            o_coefs = np.array([other.scale])
            o_P, o_Q = [other.p], [other.q]
            o_k = other.on_support(self.rows, self.cols)
        if keep == 0.0:
            coefs, P, Q = delta * o_coefs, list(o_P), list(o_Q)
            kvals = delta * o_k
        else:
            coefs = np.concatenate([keep * self.coefs, delta * o_coefs])
            P, Q = self.P + list(o_P), self.Q + list(o_Q)
            kvals = keep * self.kvals + delta * o_k
        return LowRankIterate(self.shape, self.rows, self.cols, coefs, P, Q, kvals)

    def on_support(self, rows, cols):
        if rows is self.rows and cols is self.cols:
            return self.kvals
        out = np.zeros(np.shape(rows))
        for c, p, q in zip(self.coefs, self.P, self.Q):
            out += c * _kernels.rank1_gather(rows, cols, p, q)
        return out

    def to_dense(self):
        out = np.zeros(self.shape)
        for c, p, q in zip(self.coefs, self.P, self.Q):
            out += c * np.outer(p, q)
        return out

    def singular_values(self):
        """Singular values through thin QR of the stacked factors (no m x n matrix)."""
        if not self.P:
            return np.zeros(0)
        P = np.column_stack(self.P)
        Q = np.column_stack(self.Q)
        _, Rp = np.linalg.qr(P)
        _, Rq = np.linalg.qr(Q)
        core = Rp @ np.diag(self.coefs) @ Rq.T
        return np.linalg.svd(core, compute_uv=False)

    def __repr__(self):
        return f"LowRankIterate(shape={self.shape}, atoms={self.n_atoms})"


def inner(a, b):
    """Euclidean / Frobenius inner product across the supported containers."""
    if isinstance(a, ObservedEntries):
        if isinstance(b, ObservedEntries):
            a._check_support(b)
            return float(np.dot(a.vals, b.vals))
        return float(np.dot(a.vals, b.on_support(a.rows, a.cols)))
    if isinstance(b, ObservedEntries):
        return inner(b, a)
    return float(np.dot(np.ravel(a), np.ravel(b)))


# ---------------------------------------------------------------------------
# constraint sets

def _check_radius(r):
    if not (r > 0 and math.isfinite(r)):
        raise ValueError(f"radius must be positive and finite, got {r}")


def _as_vector(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class L2Ball:
    radius: float = 1.0

    def __post_init__(self):
        _check_radius(self.radius)

    def diameter(self):
        return 2.0 * self.radius

    def contains(self, x, tol=DEFAULT_TOL):
        return bool(np.linalg.norm(_as_vector(x)) <= self.radius + tol)


@dataclass(frozen=True)
class L1Ball:
    radius: float = 1.0

    def __post_init__(self):
        _check_radius(self.radius)

    def diameter(self):
        return 2.0 * self.radius

    def contains(self, x, tol=DEFAULT_TOL):
        return bool(np.abs(_as_vector(x)).sum() <= self.radius + tol)


@dataclass(frozen=True)
class Simplex:
    """{x >= 0, sum(x) = radius}."""

    radius: float = 1.0

    def __post_init__(self):
        _check_radius(self.radius)

    def diameter(self):
        return self.radius * math.sqrt(2.0)

    def contains(self, x, tol=DEFAULT_TOL):
        x = _as_vector(x)
        return bool(x.min(initial=0.0) >= -tol and abs(x.sum() - self.radius) <= tol)


def nsupport_norm(x, n):
    """The n-support norm via its sorted-magnitude closed form.

    With z the magnitudes sorted decreasingly, find r in {0..n-1} such that
    z[n-r-2] > T_r / (r+1) >= z[n-r-1], T_r = sum(z[n-r-1:]); then
    norm^2 = sum(z[:n-r-1]^2) + T_r^2 / (r+1).
    """
    z = np.sort(np.abs(_as_vector(x)))[::-1]
    d = z.size
    if not 1 <= n <= d:
        raise ValueError(f"sparsity n must lie in [1, {d}], got {n}")
    tails = np.cumsum(z[::-1])[::-1]  # tails[i] = sum(z[i:])
    best = None
    for r in range(n):
        head = n - r - 1  # number of untouched leading entries
        t = tails[head]
        avg = t / (r + 1)
        upper = np.inf if head == 0 else z[head - 1]
        val = float(np.sum(z[:head] ** 2) + t * t / (r + 1))
        slack = 1e-12 * max(1.0, avg)
        if upper + slack > avg >= z[head] - slack:
            return math.sqrt(val)
        if best is None or val > best:
            best = val
    # rounding pushed every r outside its window; the maximum is the norm
    return math.sqrt(best)


@dataclass(frozen=True)
class NSupportBall:
    """Convex hull of vectors with at most n nonzeros and l2 norm <= radius."""

    n: int
    radius: float = 1.0

    def __post_init__(self):
        _check_radius(self.radius)
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sparsity n must be a positive integer, got {self.n}")

    def diameter(self):
        return 2.0 * self.radius

    def contains(self, x, tol=DEFAULT_TOL):
        x = _as_vector(x)
        if self.n > x.size:
            raise DimensionMismatch(f"n={self.n} exceeds dimension {x.size}")
        return bool(nsupport_norm(x, self.n) <= self.radius + tol)


@dataclass(frozen=True)
class NuclearBall:
    shape: tuple
    radius: float = 1.0

    def __post_init__(self):
        _check_radius(self.radius)
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))

    def diameter(self):
        # Frobenius diameter: ||X||_F <= ||X||_nuc
        return 2.0 * self.radius

    def contains(self, x, tol=DEFAULT_TOL):
        if isinstance(x, LowRankIterate):
            if x.shape != self.shape:
                raise DimensionMismatch(f"iterate shape {x.shape} != {self.shape}")
            s = x.singular_values()
        elif hasattr(x, "materialize"):
            return self.contains(x.materialize(), tol)
        else:
            x = np.asarray(x, dtype=np.float64)
            if x.shape != self.shape:
                raise DimensionMismatch(f"matrix shape {x.shape} != {self.shape}")
            s = np.linalg.svd(x, compute_uv=False)
        return bool(s.sum() <= self.radius + tol)


VECTOR_SETS = (L2Ball, L1Ball, Simplex, NSupportBall)


def diameter(c):
    return c.diameter()


def contains(c, x, tol=DEFAULT_TOL):
    return c.contains(x, tol)


# ---------------------------------------------------------------------------
# objectives

class Objective:
    """First-order oracle: ``obj(x) -> (value, gradient)``.

    Subclasses set ``dim`` and may set ``lipschitz`` when a bound is known.
    """

    dim = None
    lipschitz = None

    def evaluate(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(x)


class CountingObjective(Objective):
    """Wraps an objective and counts first-order calls."""

    def __init__(self, inner_obj):
        self.inner = inner_obj
        self.dim = inner_obj.dim
        self.lipschitz = inner_obj.lipschitz
        self.calls = 0

    def evaluate(self, x):
        self.calls += 1
        return self.inner.evaluate(x)
