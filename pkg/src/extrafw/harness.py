"""Experiment runner: config -> problem + constraint + solvers -> traces.

A config is a TOML file (see README).  Each solver gets its own CSV trace
``<out>/<solver>.csv``; ``<out>/summary.json`` collects the final numbers and
``<out>/timing.json`` holds per-iteration wall-clock, which is kept out of
the traces so that they are byte-reproducible.
"""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field
import json
import math
import os
from pathlib import Path
import sys
import time
import warnings

import numpy as np

from . import _kernels
from .certificates import cert_init, cert_update, fw_duality_gap
from .data_io import (
    DataError, map_labels, normalize_maxabs, nuclear_norm_factors, parse_libsvm,
    parse_movielens, synth_logistic, synth_lowrank, train_test_split,
)
from .lmo import ZeroGradient, lmo_with_fallback
from .oracles import (
    CompletionProblem, InactiveConstraint, LogisticProblem, QuadraticProblem,
    estimate_lipschitz,
)
from .problem import (
    L1Ball, L2Ball, LowRankIterate, NSupportBall, NuclearBall, Simplex,
)
from .solvers import FW_FAMILY, SOLVERS, default_x0, run

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATA_DIR_ENV = "EXTRAFW_DATA_DIR"
TASKS = ("logistic", "completion", "quadratic")
CONSTRAINTS = ("l2", "l1", "simplex", "nsupport", "nuclear")


class ConfigError(ValueError):
    pass


class NonPositiveGap(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# config

@dataclass
class ExperimentConfig:
    task: str
    data: dict
    constraint: dict
    solvers: list
    iterations: int
    x0: str = "default"
    seed: int = 0
    output: str = "runs/out"
    epsilon: float = None
    reference: dict = None
    rank_every: int = 0
    name: str = "experiment"
    base_dir: Path = field(default=Path("."), repr=False)

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        ctype = self.constraint.get("type")
        if ctype not in CONSTRAINTS:
            raise ConfigError(f"constraint.type must be one of {CONSTRAINTS}, got {ctype!r}")
        if (self.task == "completion") != (ctype == "nuclear"):
            raise ConfigError("the completion task pairs with the nuclear constraint and only with it")
        if "radius" not in self.constraint and "radius_scale" not in self.constraint:
            raise ConfigError("constraint needs radius (or radius_scale for synthetic completion)")
        if ctype == "nsupport" and "n" not in self.constraint:
            raise ConfigError("nsupport constraint needs n")
        if not self.solvers:
            raise ConfigError("solver list is empty")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ConfigError(f"unknown solver {s!r}; choose from {SOLVERS}")
            if s in ("gd", "nag") and ctype in ("nsupport", "nuclear"):
                raise ConfigError(f"{s} needs a projection, which {ctype} does not offer")
        if len(set(self.solvers)) != len(self.solvers):
            raise ConfigError("duplicate solver names")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError("iterations must be an integer >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.x0 not in ("default", "zero"):
            raise ConfigError("x0 must be 'default' or 'zero'")
        if self.x0 == "zero" and ctype == "simplex":
            raise ConfigError("x0 = 0 is infeasible for the simplex")
        if self.reference is not None:
            if self.reference.get("solver") not in SOLVERS:
                raise ConfigError("reference.solver must name a solver")
            if int(self.reference.get("iterations", 0)) < 1:
                raise ConfigError("reference.iterations must be >= 1")
        src = self.data.get("source")
        allowed = {"logistic": ("synthetic", "libsvm"), "completion": ("synthetic", "movielens"),
                   "quadratic": ("inline",)}[self.task]
        if src not in allowed:
            raise ConfigError(f"data.source for {self.task} must be one of {allowed}, got {src!r}")
        return self


def parse_config(text, base_dir="."):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    known = {"task", "data", "constraint", "solvers", "iterations", "x0", "seed", "output",
             "epsilon", "reference", "rank_every", "name"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for key in ("task", "data", "constraint", "solvers", "iterations"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    cfg = ExperimentConfig(base_dir=Path(base_dir), **raw)
    return cfg.validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _resolve_data_path(cfg, p):
    p = Path(p)
    if p.is_absolute():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    return (Path(root) if root else cfg.base_dir) / p


# ---------------------------------------------------------------------------
# problem assembly

@dataclass
class Setup:
    objective: object
    constraint: object
    x0: object
    L: float = None
    f_star: float = None
    test: tuple = None


def _open_data(cfg):
    path = _resolve_data_path(cfg, cfg.data.get("path", ""))
    try:
        return open(path)
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from None


def _build_constraint(cfg, dim=None, shape=None, truth_nuc=None):
    c = cfg.constraint
    ctype = c["type"]
    if "radius" in c:
        R = float(c["radius"])
    elif truth_nuc is not None:
        R = float(c["radius_scale"]) * truth_nuc
    else:
        raise ConfigError("radius_scale needs a synthetic completion task with known ground truth")
    try:
        if ctype == "l2":
            return L2Ball(R)
        if ctype == "l1":
            return L1Ball(R)
        if ctype == "simplex":
            return Simplex(R)
        if ctype == "nsupport":
            n = int(c["n"])
            if not 1 <= n <= dim:
                raise ConfigError(f"nsupport n={n} must lie in [1, {dim}]")
            return NSupportBall(n, R)
        return NuclearBall(shape, R)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def build(cfg):
    d = cfg.data
    seed = cfg.seed
    if cfg.task == "quadratic":
        if "center" in d:
            center = np.asarray(d["center"], dtype=np.float64)
        else:
            center = np.zeros(int(d["dim"]))
            center[0] = float(d.get("center_first", 1.0))
        obj = QuadraticProblem(center)
        c = _build_constraint(cfg, dim=obj.dim)
        f_star = None
        if isinstance(c, L2Ball):
            try:
                f_star = obj.argmin_l2(c.radius)[1]
            except InactiveConstraint:
                f_star = 0.0
        return Setup(obj, c, _x0(cfg, c, obj), L=1.0, f_star=f_star)

    if cfg.task == "logistic":
        if d["source"] == "synthetic":
            ds = synth_logistic(d.get("seed", seed), int(d["n_samples"]), int(d["dim"]),
                                float(d.get("sparsity", 0.1)), float(d.get("margin", math.inf)),
                                col_decay=float(d.get("col_decay", 1.0)),
                                intercept=bool(d.get("intercept", True)))
        else:
            with _open_data(cfg) as fh:
                ds = parse_libsvm(fh, d.get("n_features"))
        if "positive_class" in d:
            ds = map_labels(ds, float(d["positive_class"]))
        elif not np.all(np.abs(ds.labels) == 1.0):
            raise DataError("labels are not +-1; set data.positive_class")
        if d.get("normalize", False):
            ds = normalize_maxabs(ds)
        if "split" in d:
            ds = train_test_split(ds, float(d["split"]), d.get("split_seed", seed))
        A, b = ds.train_part()
        obj = LogisticProblem(A, b)
        c = _build_constraint(cfg, dim=obj.dim)
        L = None
        if any(s in ("gd", "nag") for s in cfg.solvers + [(cfg.reference or {}).get("solver")]):
            L = estimate_lipschitz(obj)
            if not L > 0:
                raise DataError("Lipschitz estimate is 0 (all-zero features); GD/NAG step undefined")
        return Setup(obj, c, _x0(cfg, c, obj), L=L, test=ds.test_part())

    # completion
    truth_nuc = None
    if d["source"] == "synthetic":
        K, (U, V) = synth_lowrank(d.get("seed", seed), int(d["m"]), int(d["n"]), int(d["rank"]),
                                  float(d["density"]), float(d.get("noise", 0.0)))
        truth_nuc = nuclear_norm_factors(U, V)
    else:
        with _open_data(cfg) as fh:
            K = parse_movielens(fh, (int(d.get("m", 943)), int(d.get("n", 1682))))
    obj = CompletionProblem(K)
    c = _build_constraint(cfg, shape=K.shape, truth_nuc=truth_nuc)
    return Setup(obj, c, obj.zero_iterate(), L=1.0)


def _x0(cfg, c, obj):
    return default_x0(c, dim=obj.dim)


# ---------------------------------------------------------------------------
# traces and metrics

class Trace:
    """Per-iteration records with a fixed column set."""

    def __init__(self, columns, rows=None):
        self.columns = list(columns)
        self.rows = [] if rows is None else rows

    def append(self, row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([np.nan if r.get(name) is None else float(r[name]) for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in self.columns])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            columns = next(rd)
            rows = [{c: (None if v == "" else float(v)) for c, v in zip(columns, line)} for line in rd]
        return cls(columns, rows)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def sparsity(x, tol=1e-12):
    return int(np.count_nonzero(np.abs(np.asarray(x)) > tol))


def numerical_rank(x, tol=1e-9):
    """Singular values above tol * sigma_1, via the factored path for low-rank iterates."""
    if isinstance(x, LowRankIterate):
        s = x.singular_values()
    elif hasattr(x, "materialize"):
        return 1 if x.scale != 0 else 0
    else:
        s = np.linalg.svd(np.asarray(x, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def accuracy(A, b, x):
    pred = np.where(A.matvec(x) >= 0, 1.0, -1.0)
    return float(np.mean(pred == b))


def test_accuracy(ds, x):
    part = ds.test_part()
    if part is None:
        raise ValueError("dataset has no test split")
    return accuracy(part[0], part[1], x)


def _fit(k, y, clip):
    k = np.asarray(k, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    clipped = bool(np.any(~(y > 0)))
    if clipped:
        if not clip:
            raise NonPositiveGap("non-positive values in the fitted range")
        y = np.maximum(np.nan_to_num(y, nan=0.0), 1e-16)
    if k.size < 2:
        raise ValueError("need at least two points to fit a slope")
    slope = np.polyfit(np.log(k), np.log(y), 1)[0]
    return float(slope), clipped


def slope_fit(trace, k_range, column="optimality", clip=False):
    """Least-squares slope of log(column) against log(k) over k_range = (k1, k2)."""
    k1, k2 = k_range
    ks = trace.column("k")
    sel = (ks >= max(k1, 1)) & (ks <= k2)
    slope, clipped = _fit(ks[sel], trace.column(column)[sel], clip)
    if clipped:
        warnings.warn("non-positive gaps clipped at 1e-16 before fitting", RuntimeWarning)
    return slope


def trace_columns(task, solver, with_test):
    cols = ["k", "f", "optimality", "certificate", "cert_best"]
    if task == "completion":
        cols += ["atoms", "rank"]
    else:
        cols += ["nnz"]
        if with_test:
            cols += ["test_accuracy"]
    return cols


class TraceRecorder:
    """Run-loop callback: records one row per iterate and tracks the certificate.

    FW reports the duality gap; AFW and ExtraFW report the estimate-sequence
    bound; GD/NAG carry no certificate.  Returns True to stop once the
    certificate drops to ``epsilon``.
    """

    def __init__(self, solver, setup, task, epsilon=None, rank_every=0, seed=0):
        self.solver = solver
        self.setup = setup
        self.task = task
        self.epsilon = epsilon
        self.rank_every = rank_every
        self.trace = Trace(trace_columns(task, solver, setup.test is not None))
        self.cert = None
        self.best = math.inf
        self.times = []
        self.rng = np.random.default_rng([seed, 7919])
        self._t = time.perf_counter()

    def __call__(self, state):
        now = time.perf_counter()
        self.times.append(now - self._t)
        obj, c = self.setup.objective, self.setup.constraint
        x = state.x
        if state.fx is not None:
            fx, grad = state.fx, state.grad
        else:
            fx, grad = obj(x)
        cert = None
        if self.solver == "fw":
            try:
                v = lmo_with_fallback(c, grad, self.rng)
            except ZeroGradient:
                v = x
            cert = fw_duality_gap(grad, x, v)
        elif self.solver in FW_FAMILY:
            r = state.report
            if r is None:
                # no bound before the first step; the cell stays blank
                self.cert = cert_init(fx)
            else:
                self.cert = cert_update(self.cert, r.delta, r.f_point, r.grad_point, r.point,
                                        r.g, r.v, f_iterate=fx)
                cert = self.cert.bound
        if cert is not None:
            self.best = min(self.best, cert)
        row = {"k": state.k, "f": fx, "certificate": cert,
               "cert_best": self.best if cert is not None else None}
        if self.task == "completion":
            row["atoms"] = x.n_atoms
            if self.rank_every and state.k % self.rank_every == 0:
                row["rank"] = numerical_rank(x)
        else:
            row["nnz"] = sparsity(x)
            if self.setup.test is not None:
                row["test_accuracy"] = accuracy(self.setup.test[0], self.setup.test[1], x)
        self.trace.append(row)
        self.final_x = x
        self._t = time.perf_counter()
        return self.epsilon is not None and cert is not None and cert <= self.epsilon


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentResult:
    traces: dict
    summary: dict
    timings: dict


def _run_one(cfg, setup, solver, index):
    rng = np.random.default_rng([cfg.seed, index])
    rec = TraceRecorder(solver, setup, cfg.task, cfg.epsilon, cfg.rank_every, cfg.seed)
    res = run(solver, setup.objective, setup.constraint, setup.x0, cfg.iterations,
              callbacks=[rec], L=setup.L, rng=rng)
    if cfg.task == "completion" and cfg.rank_every and rec.trace.rows[-1].get("rank") is None:
        rec.trace.rows[-1]["rank"] = numerical_rank(rec.final_x)
    return solver, rec, res


def _reference_min(cfg, setup):
    ref = cfg.reference
    best = [math.inf]

    def cb(state):
        f = state.fx if state.fx is not None else setup.objective(state.x)[0]
        best[0] = min(best[0], f)

    rng = np.random.default_rng([cfg.seed, 1000])
    run(ref["solver"], setup.objective, setup.constraint, setup.x0, int(ref["iterations"]),
        callbacks=[cb], L=setup.L, rng=rng)
    return best[0]


def run_experiment(cfg, out=None, jobs=1, write=True):
    """Run every configured solver and (optionally) write traces and summary."""
    setup = build(cfg)
    work = [(s, i) for i, s in enumerate(cfg.solvers)]
    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(lambda a: _run_one(cfg, setup, *a), work))
    else:
        done = [_run_one(cfg, setup, s, i) for s, i in work]

    if setup.f_star is not None:
        f_ref, source = setup.f_star, "analytic"
    else:
        f_ref = min(float(np.min(rec.trace.column("f"))) for _, rec, _ in done)
        source = "best_found"
        if cfg.reference is not None:
            f_ref = min(f_ref, _reference_min(cfg, setup))
            source = "best_found_with_reference"

    traces, timings = {}, {}
    solvers_summary = {}
    for solver, rec, res in done:
        tr = rec.trace
        for row in tr.rows:
            row["optimality"] = row["f"] - f_ref
        traces[solver] = tr
        timings[solver] = rec.times
        last = tr.rows[-1]
        entry = {
            "final_k": int(last["k"]),
            "f": last["f"],
            "optimality": last["optimality"],
            "certificate": last["certificate"],
            "certificate_kind": {"fw": "duality_gap", "afw": "es_bound",
                                 "extrafw": "es_bound"}.get(solver),
            "cert_best": last["cert_best"],
            "fo_calls": res.fo_calls,
            "lmo_calls": res.lmo_calls,
            "stopped_at": res.stopped_at,
            "wall_seconds": float(sum(rec.times)),
        }
        if cfg.task == "completion":
            entry["atoms"] = int(last["atoms"])
            entry["rank"] = numerical_rank(rec.final_x)
        else:
            entry["nnz"] = int(last["nnz"])
            if "test_accuracy" in last:
                entry["test_accuracy"] = last["test_accuracy"]
        K = int(last["k"])
        if K >= 20:
            k_range = (max(1, K // 10), K)
            slope, clipped = _fit(*_select(tr, k_range), clip=True)
            entry["slope"] = {"from": k_range[0], "to": k_range[1], "value": slope,
                              "clipped": clipped}
        solvers_summary[solver] = entry

    summary = {
        "name": cfg.name,
        "task": cfg.task,
        "constraint": dict(cfg.constraint, radius=_radius(setup.constraint)),
        "iterations": cfg.iterations,
        "seed": cfg.seed,
        "f_ref": f_ref,
        "f_ref_source": source,
        "solvers": solvers_summary,
    }
    if write:
        out = Path(out or cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        for solver, tr in traces.items():
            tr.to_csv(out / f"{solver}.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json) + "\n")
        (out / "timing.json").write_text(json.dumps(
            {"backend": _kernels.BACKEND, "seconds_per_iteration": timings}, default=_json) + "\n")
    return ExperimentResult(traces, summary, timings)


def _select(trace, k_range):
    ks = trace.column("k")
    sel = (ks >= k_range[0]) & (ks <= k_range[1])
    return ks[sel], trace.column("optimality")[sel]


def _radius(c):
    return float(c.radius)


def _json(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(type(o).__name__)
