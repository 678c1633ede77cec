"""Dataset parsers (LIBSVM, MovieLens u.data) and synthetic generators."""
from dataclasses import dataclass, replace
import hashlib
import math

import numpy as np

from .problem import ObservedEntries, SparseMatrix


class DataError(ValueError):
    pass


class MalformedLine(DataError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")


class DuplicateEntry(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class DegenerateLabels(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: SparseMatrix
    labels: np.ndarray
    feature_names: tuple = None
    train: np.ndarray = None
    test: np.ndarray = None
    planted: np.ndarray = None

    @property
    def n_samples(self):
        return self.features.shape[0]

    def train_part(self):
        if self.train is None:
            return self.features, self.labels
        return self.features.take_rows(self.train), self.labels[self.train]

    def test_part(self):
        if self.test is None or self.test.size == 0:
            return None
        return self.features.take_rows(self.test), self.labels[self.test]


def _finite(tok, line_no, what):
    try:
        v = float(tok)
    except ValueError:
        raise MalformedLine(line_no, f"non-numeric {what} {tok!r}") from None
    if not math.isfinite(v):
        raise MalformedLine(line_no, f"non-finite {what} {tok!r}")
    return v


def parse_libsvm(stream, n_features=None):
    """Parse ``<label> <idx>:<val> ...`` lines (1-based, ascending indices).

    Blank lines and ``#`` comments are skipped.  Labels are kept raw.
    """
    rows, labels = [], []
    max_idx = 0
    for line_no, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        labels.append(_finite(toks[0], line_no, "label"))
        idx, val = [], []
        prev = 0
        for tok in toks[1:]:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise MalformedLine(line_no, f"expected idx:val, got {tok!r}")
            try:
                j = int(head)
            except ValueError:
                raise MalformedLine(line_no, f"non-integer index {head!r}") from None
            if j <= prev:
                raise MalformedLine(line_no, "indices must be >= 1 and strictly ascending")
            prev = j
            v = _finite(tail, line_no, "value")
            if v != 0.0:
                idx.append(j - 1)
                val.append(v)
        max_idx = max(max_idx, prev)
        rows.append((idx, val))
    if n_features is None:
        n_features = max_idx
    elif max_idx > n_features:
        raise IndexOutOfRange(f"feature index {max_idx} exceeds n_features={n_features}")
    return Dataset(SparseMatrix.from_rows(rows, n_features), np.array(labels, dtype=np.float64))


def format_libsvm(ds):
    lines = []
    for i in range(ds.n_samples):
        ind, val = ds.features.row(i)
        toks = [repr(float(ds.labels[i]))]
        toks += [f"{j + 1}:{v!r}" for j, v in zip(ind.tolist(), val.tolist())]
        lines.append(" ".join(toks) + "\n")
    return "".join(lines)


def map_labels(ds, positive_class):
    """One-vs-rest: ``positive_class`` becomes +1, everything else -1."""
    y = np.where(ds.labels == positive_class, 1.0, -1.0)
    if y.size and np.all(y == y[0]):
        raise DegenerateLabels(f"every label maps to {y[0]:+.0f}")
    return replace(ds, labels=y)


def normalize_maxabs(ds):
    """Scale each column by its largest magnitude."""
    A = ds.features
    scale = np.zeros(A.shape[1])
    np.maximum.at(scale, A.indices, np.abs(A.data))
    scale[scale == 0.0] = 1.0
    B = SparseMatrix(A.indptr, A.indices, A.data / scale[A.indices], A.shape)
    return replace(ds, features=B)


def parse_movielens(stream, shape=(943, 1682)):
    """Parse ``user<TAB>item<TAB>rating<TAB>timestamp`` lines (1-based ids)."""
    m, n = shape
    rows, cols, vals = [], [], []
    seen = set()
    for line_no, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        toks = line.split("\t")
        if len(toks) != 4:
            raise MalformedLine(line_no, f"expected 4 tab-separated fields, got {len(toks)}")
        try:
            u, it = int(toks[0]), int(toks[1])
        except ValueError:
            raise MalformedLine(line_no, "non-integer user/item id") from None
        r = _finite(toks[2], line_no, "rating")
        if not (1 <= u <= m and 1 <= it <= n):
            raise IndexOutOfRange(f"line {line_no}: ({u}, {it}) outside 1..{m} x 1..{n}")
        if (u, it) in seen:
            raise DuplicateEntry(f"line {line_no}: duplicate rating for ({u}, {it})")
        seen.add((u, it))
        rows.append(u - 1)
        cols.append(it - 1)
        vals.append(r)
    return ObservedEntries(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                           np.array(vals), shape)


def synth_logistic(seed, N, d, sparsity=0.1, margin=math.inf, support=None,
                   col_decay=1.0, intercept=True):
    """Sparse features with labels from a planted sparse linear model.

    Each row keeps about ``sparsity * d`` (at least one) nonnegative entries
    whose column j is scaled by (j+1)^-col_decay, mimicking the uneven
    feature scales of real LIBSVM data; with ``intercept`` column 0 is a
    constant 1.  The planted vector w (``support`` nonzeros plus the
    intercept weight) is standardized so that <a_i, w> has median 0 and unit
    spread.  Labels follow P(b = +1) = sigmoid(margin * <a, w>); an infinite
    margin gives b = sgn(<a, w>) with sgn(0) = +1, so w separates the data.
    """
    if N < 1 or d < 1:
        raise ValueError("N and d must be positive")
    rng = np.random.default_rng(seed)
    first = 1 if intercept and d > 1 else 0
    pool = d - first
    k = min(pool, max(1, int(round(sparsity * d))))
    scale = np.arange(1.0, d + 1.0) ** (-col_decay)
    rows = []
    for _ in range(N):
        idx = first + np.sort(rng.choice(pool, size=k, replace=False))
        val = np.abs(rng.standard_normal(k)) * scale[idx]
        if first:
            idx = np.concatenate([[0], idx])
            val = np.concatenate([[1.0], val])
        rows.append((idx, val))
    A = SparseMatrix.from_rows(rows, d)
    n_support = min(pool, support if support is not None else max(1, d // 10))
    w = np.zeros(d)
    w[first + np.sort(rng.choice(pool, size=n_support, replace=False))] = rng.standard_normal(n_support)
    s = A.matvec(w)
    spread = s.std() if s.std() > 0 else 1.0
    w /= spread
    if first:
        w[0] -= np.median(s) / spread
    s = A.matvec(w)
    if math.isinf(margin):
        b = np.where(s >= 0, 1.0, -1.0)
    else:
        z = np.clip(margin * s, -700, 700)
        b = np.where(rng.random(N) < 1.0 / (1.0 + np.exp(-z)), 1.0, -1.0)
    return Dataset(A, b, planted=w)


def synth_lowrank(seed, m, n, rank, density, noise=0.0):
    """Observed entries of U V^T + noise on a uniform random support.

    Returns (ObservedEntries, (U, V)); |K| = round(density * m * n).
    """
    if not 1 <= rank <= min(m, n):
        raise ValueError("rank must lie in [1, min(m, n)]")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((m, rank))
    V = rng.standard_normal((n, rank))
    size = int(round(density * m * n))
    flat = np.sort(rng.choice(m * n, size=size, replace=False))
    rows, cols = np.divmod(flat, n)
    vals = np.einsum("ij,ij->i", U[rows], V[cols])
    if noise > 0:
        vals = vals + noise * rng.standard_normal(size)
    return ObservedEntries(rows, cols, vals, (m, n)), (U, V)


def nuclear_norm_factors(U, V):
    _, Ru = np.linalg.qr(U)
    _, Rv = np.linalg.qr(V)
    return float(np.linalg.svd(Ru @ Rv.T, compute_uv=False).sum())


def train_test_split(ds, fraction, seed):
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    perm = np.random.default_rng(seed).permutation(ds.n_samples)
    n_train = int(round(fraction * ds.n_samples))
    return replace(ds, train=np.sort(perm[:n_train]), test=np.sort(perm[n_train:]))


def dataset_hash(ds):
    h = hashlib.sha256()
    A = ds.features
    for a in (A.indptr, A.indices, A.data, np.asarray(ds.labels, dtype=np.float64)):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()
