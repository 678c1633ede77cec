"""Acceptance checks, one test per criterion.

Every sub-check is evaluated and recorded before a test asserts, so the
terminal summary shows one PASS/FAIL line per criterion with the numbers
behind it.
"""
import math
import time

import numpy as np
import pytest

from extrafw.certificates import cert_init, cert_update, lam_closed_form, xi_update
from extrafw.data_io import synth_logistic
from extrafw.harness import Trace, load_config, run_experiment, slope_fit
from extrafw.lmo import (
    NoConvergence, lmo_bruteforce, lmo_l1, lmo_nuclear, lmo_simplex, lmo_with_fallback,
)
from extrafw.oracles import CompletionProblem, LogisticProblem, QuadraticProblem
from extrafw.problem import L1Ball, L2Ball, NuclearBall, ObservedEntries, Simplex, diameter
from extrafw.solvers import accel_delta, run
from conftest import ACCEPTANCE, CONFIGS, FIXTURES


def record(crit, name, ok, info):
    ACCEPTANCE.setdefault(crit, []).append((name, bool(ok), info))
    print(f"criterion {crit}: {name}: {'PASS' if ok else 'FAIL'} ({info})")
    return bool(ok)


def verdict(crit):
    failed = [f"{n} ({i})" for n, ok, i in ACCEPTANCE[crit] if not ok]
    assert not failed, "; ".join(failed)


# shared runs ---------------------------------------------------------------

D = 50
CENTER = np.zeros(D)
CENTER[0] = 2.0
QUAD = QuadraticProblem(CENTER)
BALL = L2Ball(1.0)


@pytest.fixture(scope="module")
def quad_runs():
    """Criterion-1 setup: per solver, (f values, certificate objects, elapsed seconds)."""
    f_star = QUAD.argmin_l2(1.0)[1]
    out = {}
    for solver in ("fw", "afw", "extrafw"):
        fs, certs = [], []
        cert = [None]

        def cb(s):
            fx = QUAD(s.x)[0] if s.fx is None else s.fx
            fs.append(fx)
            if solver == "fw":
                return
            r = s.report
            if r is None:
                cert[0] = cert_init(fx)
            else:
                cert[0] = cert_update(cert[0], r.delta, r.f_point, r.grad_point, r.point, r.g, r.v, f_iterate=fx)
            certs.append(cert[0])

        t = time.perf_counter()
        run(solver, QUAD, BALL, np.zeros(D), 2000, callbacks=[cb])
        out[solver] = (np.array(fs), certs, time.perf_counter() - t)
    return f_star, out


@pytest.fixture(scope="module")
def config_runs(tmp_path_factory):
    """First run of every shipped config; criterion 10 runs each a second time."""
    base = tmp_path_factory.mktemp("runs")
    mp = pytest.MonkeyPatch()
    mp.setenv("EXTRAFW_DATA_DIR", str(FIXTURES / "data"))
    results = {}
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        results[path.stem] = (run_experiment(cfg, out=base / "a" / path.stem), base)
    yield results
    mp.undo()


# criteria ------------------------------------------------------------------

def test_criterion_01_rate_separation(quad_runs):
    f_star, runs = quad_runs
    for solver, lo, hi in (("extrafw", -math.inf, -1.7), ("fw", -1.3, -0.7), ("afw", -math.inf, -1.5)):
        fs, _, secs = runs[solver]
        tr = Trace(["k", "optimality"], [{"k": k, "optimality": f - f_star} for k, f in enumerate(fs)])
        n_bad = int(np.sum(fs[200:] - f_star <= 0))
        s = slope_fit(tr, (200, 2000), clip=n_bad > 0)
        info = f"slope {s:.3f}, window [{lo}, {hi}]"
        if n_bad:
            info += f", {n_bad} non-positive gaps clipped at 1e-16"
        record(1, f"{solver} slope", lo <= s <= hi, info)
    total = sum(r[2] for r in runs.values())
    record(1, "runtime", total < 10.0, f"{total:.2f} s for all three runs")
    verdict(1)


def test_criterion_02_certificate_soundness(quad_runs):
    f_star, runs = quad_runs
    for solver in ("afw", "extrafw"):
        fs, certs, _ = runs[solver]
        gaps = fs[1:] - f_star
        bounds = np.array([c.bound for c in certs[1:]])
        worst = float(np.min(bounds - gaps))
        record(2, f"{solver} bound >= gap", worst >= -1e-9, f"min(bound - gap) = {worst:.2e}")
        ratio = bounds[-1] / gaps[-1]
        record(2, f"{solver} tightness at k=2000", bounds[-1] <= 1e3 * gaps[-1], f"bound/gap = {ratio:.3f}")
    verdict(2)


def test_criterion_03_xi_sandwich(quad_runs):
    _, runs = quad_runs
    fs, certs, _ = runs["extrafw"]
    xi, worst = 0.0, -math.inf
    for k in range(501):
        worst = max(worst, fs[k] - (certs[k].phi_star + xi))
        xi = xi_update(xi, accel_delta(k), 1.0, diameter(BALL))
    record(3, "f <= phi* + xi for k <= 500", worst <= 0.0, f"max(f - phi* - xi) = {worst:.3e}")
    verdict(3)


def test_criterion_04_lmo_exactness():
    rng = np.random.default_rng(4)
    t = time.perf_counter()
    mism = 0
    for i in range(10_000):
        d = int(rng.integers(1, 21))
        # coarse values so that ties occur regularly
        g = rng.integers(-4, 5, size=d).astype(float) if i % 2 else rng.standard_normal(d)
        for c, f in ((L1Ball(1.7), lmo_l1), (Simplex(2.3), lmo_simplex)):
            if isinstance(c, L1Ball) and not np.any(g):
                continue
            v = f(g, c.radius)
            if g @ v != g @ lmo_bruteforce(g, c):
                mism += 1
    record(4, "l1/simplex vs brute force", mism == 0, f"{mism} mismatches over 10^4 inputs")

    worst, fb_worst, retries, failures = 0.0, 0.0, 0, 0
    for _ in range(1000):
        m, n = (int(v) for v in rng.integers(1, 13, size=2))
        G = rng.standard_normal((m, n))
        rows, cols = np.nonzero(np.ones((m, n)))
        E = ObservedEntries(rows, cols, G[rows, cols], (m, n))
        atom = None
        for attempt in range(3):
            try:
                atom = lmo_nuclear(E, 1.0, rng=rng)
                break
            except NoConvergence:
                retries += 1
        s1 = np.linalg.svd(G, compute_uv=False)[0]
        if atom is None:
            # what the solvers would use instead; reported, not counted as a pass
            failures += 1
            fb = lmo_with_fallback(NuclearBall((m, n), 1.0), E, rng)
            fb_worst = max(fb_worst, abs(np.sum(G * fb.materialize()) + s1) / s1)
            continue
        worst = max(worst, abs(np.sum(G * atom.materialize()) + s1) / s1)
    info = f"max rel err {worst:.2e}, {retries} fresh-start retries, {failures} unresolved by power iteration"
    if failures:
        info += f" (Lanczos fallback on those: max rel err {fb_worst:.2e})"
    record(4, "nuclear vs dense SVD", failures == 0 and worst <= 1e-6, info)
    secs = time.perf_counter() - t
    record(4, "runtime", secs < 30.0, f"{secs:.2f} s")
    verdict(4)


def test_criterion_05_sparsity_and_rank(config_runs):
    res, _ = config_runs["logistic_l1_synth"]
    for s in ("fw", "afw", "extrafw"):
        tr = res.traces[s]
        excess = int(np.max(tr.column("nnz") - tr.column("k")))
        record(5, f"l1 {s} nnz <= k", excess <= 0, f"max(nnz - k) = {excess}")
    res, _ = config_runs["completion_synth"]
    for s in ("fw", "afw", "extrafw"):
        tr = res.traces[s]
        excess = int(np.max(tr.column("atoms") - tr.column("k") - 1))
        record(5, f"nuclear {s} atoms <= k+1", excess <= 0, f"max(atoms - k - 1) = {excess}")
    verdict(5)


def test_criterion_06_solver_ordering(config_runs):
    res, _ = config_runs["logistic_l2_synth"]
    s = res.summary["solvers"]
    e, a, f = (s[n]["optimality"] for n in ("extrafw", "afw", "fw"))
    record(6, "ExtraFW <= AFW <= FW", e <= a <= f, f"{e:.3e} <= {a:.3e} <= {f:.3e}")
    record(6, "ExtraFW <= 0.2 FW", e <= 0.2 * f, f"ratio {e / f:.4f}")
    record(6, "l2 ball active", res.summary["constraint"]["radius"] == 10.0, "R = 10")
    verdict(6)


def test_criterion_07_completion(config_runs):
    res, _ = config_runs["completion_synth"]
    s = res.summary["solvers"]
    e, f = s["extrafw"]["optimality"], s["fw"]["optimality"]
    record(7, "ExtraFW <= 0.5 FW at k=500", e <= 0.5 * f,
           f"{e:.4g} vs {f:.4g} (ratio {e / f:.3f}), f_ref {res.summary['f_ref']:.4g} ({res.summary['f_ref_source']})")
    ae, af = s["extrafw"]["atoms"], s["fw"]["atoms"]
    record(7, "ExtraFW atoms <= FW atoms", ae <= af, f"{ae} vs {af}")
    verdict(7)


def _fd_ok(f, x, g, h=1e-6):
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        fd.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    tol = np.where(np.abs(g) < 1e-7, 1e-7, 1e-4 * np.abs(g))
    return bool(np.all(np.abs(fd - g) <= tol))


def test_criterion_08_gradients():
    rng = np.random.default_rng(8)
    ds = synth_logistic(8, 80, 10, sparsity=0.4)
    logi = LogisticProblem(ds.features, ds.labels)
    quad = QuadraticProblem(rng.standard_normal(10))
    K = ObservedEntries.from_triplets([(i, j, rng.standard_normal()) for i in range(5) for j in range(6)
                                       if rng.random() < 0.5], (5, 6))
    comp = CompletionProblem(K)
    for name, p, shape in (("logistic", logi, (10,)), ("quadratic", quad, (10,)), ("completion", comp, (5, 6))):
        good = 0
        for _ in range(100):
            x = rng.standard_normal(shape) * 2
            g = p(x)[1]
            g = g.to_dense() if hasattr(g, "to_dense") else g
            good += _fd_ok(lambda z: p(z)[0], x, g)
        record(8, name, good == 100, f"{good}/100 points")
    verdict(8)


def test_criterion_09_lambda_closed_form():
    c = cert_init(0.0)
    worst = 0.0
    z = np.zeros(1)
    for k in range(10_000):
        c = cert_update(c, accel_delta(k), 0.0, z, z, z, z)
        lam = lam_closed_form(k + 1)
        worst = max(worst, abs(c.lam - lam) / lam)
    record(9, "lambda_k vs 2/((k+1)(k+2))", worst <= 1e-12, f"max rel err {worst:.2e} over 10^4 steps")
    verdict(9)


def test_criterion_10_determinism(config_runs, monkeypatch):
    monkeypatch.setenv("EXTRAFW_DATA_DIR", str(FIXTURES / "data"))
    for name, (res, base) in sorted(config_runs.items()):
        cfg = load_config(CONFIGS / f"{name}.toml")
        run_experiment(cfg, out=base / "b" / name)
        same = all((base / "a" / name / f"{s}.csv").read_bytes() == (base / "b" / name / f"{s}.csv").read_bytes()
                   for s in cfg.solvers)
        record(10, name, same, "byte-identical" if same else "traces differ")
    verdict(10)
