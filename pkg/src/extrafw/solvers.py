"""Iterative solvers as explicit step functions over a SolverState.

FW, AFW and ExtraFW only touch the feasible set through its LMO.  The
projected GD / NAG baselines need an exact projection and are limited to
the l2 ball, l1 ball and simplex.
"""
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .certificates import fw_duality_gap
from .lmo import UnsupportedConstraint, ZeroGradient, lmo_with_fallback
from .problem import (
    L1Ball, L2Ball, LowRankIterate, ObservedEntries, Simplex,
)

LMO_RETRIES = 1


def fw_delta(k):
    return 2.0 / (k + 2)


def accel_delta(k):
    """Step for AFW and ExtraFW."""
    return 2.0 / (k + 3)


@dataclass(frozen=True)
class StepReport:
    """What one step learned: the newest linearization and the averaged gradient."""

    delta: float
    f_point: float
    grad_point: object
    point: object
    g: object = None
    v: object = None
    gap: float = None


@dataclass(frozen=True)
class SolverState:
    k: int
    x: object
    g: object = None
    v: object = None
    x_prev: object = None
    # f and grad at x_k when the step already paid for them
    fx: float = None
    grad: object = None
    report: StepReport = None


def mix(x, v, delta):
    """(1 - delta) x + delta v for vectors or low-rank iterates."""
    if isinstance(x, LowRankIterate):
        return x.mix(v, delta)
    return (1.0 - delta) * x + delta * v


def zeros_like_grad(x):
    if isinstance(x, LowRankIterate):
        return ObservedEntries(x.rows, x.cols, np.zeros(x.rows.size), x.shape, check=False)
    return np.zeros_like(x)


def _lmo(c, g, rng, stats):
    if stats is not None:
        stats["lmo"] += 1
    return lmo_with_fallback(c, g, rng, LMO_RETRIES)


def init_state(solver, x0):
    if solver in ("afw", "extrafw"):
        return SolverState(k=0, x=x0, g=zeros_like_grad(x0), v=x0)
    return SolverState(k=0, x=x0, x_prev=x0)


def fw_step(state, objective, constraint, rng=None, stats=None):
    k, x = state.k, state.x
    delta = fw_delta(k)
    fx, grad = (state.fx, state.grad) if state.grad is not None else objective(x)
    try:
        v = _lmo(constraint, grad, rng, stats)
    except ZeroGradient:
        v = x
    gap = fw_duality_gap(grad, x, v)
    report = StepReport(delta, fx, grad, x, v=v, gap=gap)
    return SolverState(k=k + 1, x=mix(x, v, delta), v=v, report=report)


def afw_step(state, objective, constraint, rng=None, stats=None):
    k, x, g, v = state.k, state.x, state.g, state.v
    delta = accel_delta(k)
    y = mix(x, v, delta)
    fy, gy = objective(y)
    g_new = (1.0 - delta) * g + delta * gy
    try:
        v_new = _lmo(constraint, g_new, rng, stats)
    except ZeroGradient:
        v_new = v
    report = StepReport(delta, fy, gy, y, g=g_new, v=v_new)
    return SolverState(k=k + 1, x=mix(x, v_new, delta), g=g_new, v=v_new, report=report)


def extrafw_step(state, objective, constraint, rng=None, stats=None):
    k, x, g, v = state.k, state.x, state.g, state.v
    delta = accel_delta(k)
    # prediction
    y = mix(x, v, delta)
    _, gy = objective(y)
    g_hat = (1.0 - delta) * g + delta * gy
    try:
        v_hat = _lmo(constraint, g_hat, rng, stats)
    except ZeroGradient:
        v_hat = v
    # correction
    x_new = mix(x, v_hat, delta)
    fx_new, gx_new = objective(x_new)
    g_new = (1.0 - delta) * g + delta * gx_new
    try:
        v_new = _lmo(constraint, g_new, rng, stats)
    except ZeroGradient:
        v_new = v_hat
    report = StepReport(delta, fx_new, gx_new, x_new, g=g_new, v=v_new)
    return SolverState(k=k + 1, x=x_new, g=g_new, v=v_new, fx=fx_new, grad=gx_new, report=report)


# ---------------------------------------------------------------------------
# projections for the baselines

def project_l2(z, R):
    n = np.linalg.norm(z)
    return z if n <= R else (R / n) * z


def project_simplex(z, R):
    """Euclidean projection onto {x >= 0, sum x = R} by sorting."""
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - R
    idx = np.arange(1, z.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(z - theta, 0.0)


def project_l1(z, R):
    if np.abs(z).sum() <= R:
        return z
    return np.sign(z) * project_simplex(np.abs(z), R)


def project(c, z):
    if isinstance(c, L2Ball):
        return project_l2(z, c.radius)
    if isinstance(c, L1Ball):
        return project_l1(z, c.radius)
    if isinstance(c, Simplex):
        return project_simplex(z, c.radius)
    raise UnsupportedConstraint(f"no projection available for {type(c).__name__}")


def _check_projectable(c, L):
    if not isinstance(c, (L2Ball, L1Ball, Simplex)):
        raise UnsupportedConstraint(f"GD/NAG need a projection; {type(c).__name__} has none here")
    if not L > 0:
        raise ValueError(f"step size 1/L needs L > 0, got {L}")


def gd_step(state, objective, constraint, L, stats=None):
    _check_projectable(constraint, L)
    k, x = state.k, state.x
    fx, grad = (state.fx, state.grad) if state.grad is not None else objective(x)
    report = StepReport(1.0 / L, fx, grad, x)
    return SolverState(k=k + 1, x=project(constraint, x - grad / L), x_prev=x, report=report)


def nag_momentum(k):
    # (k-1)/(k+2) is negative at k = 0; the first step is plain GD
    return max(k - 1, 0) / (k + 2)


def nag_step(state, objective, constraint, L, stats=None):
    _check_projectable(constraint, L)
    k, x = state.k, state.x
    x_prev = x if state.x_prev is None else state.x_prev
    z = x + nag_momentum(k) * (x - x_prev)
    fz, gz = objective(z)
    report = StepReport(1.0 / L, fz, gz, z)
    return SolverState(k=k + 1, x=project(constraint, z - gz / L), x_prev=x, report=report)


# ---------------------------------------------------------------------------
# driver

SOLVERS = ("fw", "afw", "extrafw", "gd", "nag")
FW_FAMILY = ("fw", "afw", "extrafw")


def step(solver, state, objective, constraint, L=None, rng=None, stats=None):
    if solver == "fw":
        return fw_step(state, objective, constraint, rng, stats)
    if solver == "afw":
        return afw_step(state, objective, constraint, rng, stats)
    if solver == "extrafw":
        return extrafw_step(state, objective, constraint, rng, stats)
    if solver == "gd":
        return gd_step(state, objective, constraint, L, stats)
    if solver == "nag":
        return nag_step(state, objective, constraint, L, stats)
    raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")


@dataclass
class RunResult:
    state: SolverState
    fo_calls: int
    lmo_calls: int
    stopped_at: int = None
    states: list = field(default_factory=list)


class _CountFO:
    def __init__(self, objective, stats):
        self.objective = objective
        self.stats = stats

    def __call__(self, x):
        self.stats["fo"] += 1
        return self.objective(x)


def run(solver, objective, constraint, x0, K, callbacks=(), L=None, rng=None, keep_states=False):
    """Apply ``K`` steps of ``solver`` from ``x0``.

    Each callback is called as ``cb(state)`` on the initial state and after
    every step; a truthy return from any callback stops the run early.
    """
    if solver in ("gd", "nag"):
        _check_projectable(constraint, L)
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if not isinstance(x0, LowRankIterate) and not constraint.contains(x0):
        raise ValueError("x0 is infeasible")
    rng = np.random.default_rng(0) if rng is None else rng
    stats = Counter()
    fo = _CountFO(objective, stats)
    state = init_state(solver, x0)
    states = [state] if keep_states else []
    stopped = None
    if any([cb(state) for cb in callbacks]):
        stopped = 0
    while stopped is None and state.k < K:
        state = step(solver, state, fo, constraint, L=L, rng=rng, stats=stats)
        if keep_states:
            states.append(state)
        if any([cb(state) for cb in callbacks]):
            stopped = state.k
    return RunResult(state, stats["fo"], stats["lmo"], stopped, states)


def default_x0(constraint, dim=None, objective=None):
    """0 for balls (sparsity / rank invariants rely on it), R e_1 for the simplex."""
    if isinstance(constraint, Simplex):
        x0 = np.zeros(dim)
        x0[0] = constraint.radius
        return x0
    if objective is not None and hasattr(objective, "zero_iterate"):
        return objective.zero_iterate()
    return np.zeros(dim)
