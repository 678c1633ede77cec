"""First-order oracles: sparse logistic regression, observed-entry matrix
completion, and a quadratic with a closed-form constrained minimizer."""
import numpy as np

from .lmo import NoConvergence, ZeroGradient, top_singular_pair
from .problem import (
    DimensionMismatch, LowRankIterate, Objective, ObservedEntries, SparseMatrix,
)

SOFTPLUS_CUTOFF = 30.0


class InactiveConstraint(ValueError):
    pass


def softplus(t):
    """ln(1 + e^t), accurate to double precision for any t."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    hi = t > SOFTPLUS_CUTOFF
    lo = t < -SOFTPLUS_CUTOFF
    mid = ~(hi | lo)
    out[hi] = t[hi] + np.exp(-t[hi])
    out[lo] = np.exp(t[lo])
    out[mid] = np.log1p(np.exp(t[mid]))
    return out


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class LogisticProblem(Objective):
    """f(x) = (1/N) sum_i ln(1 + exp(-b_i <a_i, x>)) with labels b_i in {-1, +1}."""

    def __init__(self, features, labels):
        if not isinstance(features, SparseMatrix):
            raise TypeError("features must be a SparseMatrix")
        labels = np.asarray(labels, dtype=np.float64)
        if features.shape[0] < 1:
            raise ValueError("need at least one datum")
        if labels.shape != (features.shape[0],):
            raise DimensionMismatch("one label per feature row required")
        if not np.all((labels == 1.0) | (labels == -1.0)):
            raise ValueError("labels must be exactly +1 or -1; map them first")
        labels.setflags(write=False)
        self.features = features
        self.labels = labels
        self.n_samples, self.dim = features.shape
        self.lipschitz = None

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected x of length {self.dim}, got {x.shape}")
        margins = self.labels * self.features.matvec(x)
        value = float(np.mean(softplus(-margins)))
        w = -self.labels * sigmoid(-margins) / self.n_samples
        return value, self.features.rmatvec(w)


def logistic_eval(p, x):
    return p.evaluate(x)


def estimate_lipschitz(p, rng=None):
    """Global bound sigma_1(A)^2 / (4N) on the logistic Hessian."""
    A = p.features
    if A.nnz == 0 or not np.abs(A.data).max() > 0:
        return 0.0
    rows = A.row_ids()
    rng = np.random.default_rng(0) if rng is None else rng
    for _ in range(3):
        try:
            sigma, _, _ = top_singular_pair(rows, A.indices, A.data, A.shape, rng=rng)
            break
        except NoConvergence:
            continue
        except ZeroGradient:
            return 0.0
    else:
        # clustered top singular values: fall back to the Frobenius bound
        sigma = float(np.sqrt(np.dot(A.data, A.data)))
    L = sigma ** 2 / (4.0 * p.n_samples)
    p.lipschitz = L
    return L


class CompletionProblem(Objective):
    """f(X) = 1/2 sum_{(i,j) in K} (X_ij - A_ij)^2; gradient (X - A) restricted to K."""

    def __init__(self, observed):
        if not isinstance(observed, ObservedEntries):
            raise TypeError("observed must be ObservedEntries")
        if observed.nnz < 1:
            raise ValueError("need at least one observed entry")
        self.observed = observed
        self.shape = observed.shape
        self.dim = observed.shape[0] * observed.shape[1]
        self.lipschitz = 1.0

    def zero_iterate(self):
        return LowRankIterate.zero(self.observed)

    def _kvals(self, X):
        K = self.observed
        if isinstance(X, LowRankIterate):
            if X.shape != self.shape:
                raise DimensionMismatch(f"iterate shape {X.shape} != {self.shape}")
            return X.on_support(K.rows, K.cols)
        if hasattr(X, "on_support"):
            return X.on_support(K.rows, K.cols)
        X = np.asarray(X, dtype=np.float64)
        if X.shape != self.shape:
            raise DimensionMismatch(f"matrix shape {X.shape} != {self.shape}")
        return X[K.rows, K.cols]

    def evaluate(self, X):
        r = self._kvals(X) - self.observed.vals
        return 0.5 * float(np.dot(r, r)), self.observed.with_values(r)


def completion_eval(p, X):
    return p.evaluate(X)


class QuadraticProblem(Objective):
    """f(x) = 1/2 ||x - c||^2."""

    def __init__(self, center):
        c = np.asarray(center, dtype=np.float64)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("center must be a finite vector")
        c.setflags(write=False)
        self.center = c
        self.dim = c.size
        self.lipschitz = 1.0

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.center.shape:
            raise DimensionMismatch(f"expected x of shape {self.center.shape}, got {x.shape}")
        r = x - self.center
        return 0.5 * float(np.dot(r, r)), r

    def argmin_l2(self, R):
        """Minimizer and optimal value over the l2 ball of radius R (constraint active)."""
        nc = float(np.linalg.norm(self.center))
        if not nc >= R or nc == 0.0:
            raise InactiveConstraint(f"||c|| = {nc} < R = {R}: minimizer is interior")
        return (R / nc) * self.center, 0.5 * (nc - R) ** 2


def quadratic_eval(p, x):
    return p.evaluate(x)


def quadratic_argmin_l2(p, R):
    return p.argmin_l2(R)
