import math
import warnings

import numpy as np
import pytest

from extrafw.harness import (
    ConfigError, NonPositiveGap, Trace, load_config, numerical_rank, parse_config,
    run_experiment, slope_fit, sparsity,
)
from extrafw.lmo import RankOneAtom
from extrafw.problem import LowRankIterate, ObservedEntries
from conftest import CONFIGS

QUAD = """
name = "q"
task = "quadratic"
solvers = ["fw", "afw", "extrafw"]
iterations = {K}
{extra}
[data]
source = "inline"
dim = 50
center_first = 2.0
[constraint]
type = "l2"
radius = 1.0
"""


def quad(K=200, extra=""):
    return parse_config(QUAD.format(K=K, extra=extra))


def _trace(values, k0=1):
    return Trace(["k", "optimality"], [{"k": k, "optimality": v} for k, v in enumerate(values, start=k0)])


# config validation

@pytest.mark.parametrize("edit, msg", [
    (("task = \"quadratic\"", "task = \"bogus\""), "task"),
    (("type = \"l2\"", "type = \"nuclear\""), "completion"),
    (("solvers = [\"fw\", \"afw\", \"extrafw\"]", "solvers = []"), "empty"),
    (("solvers = [\"fw\", \"afw\", \"extrafw\"]", "solvers = [\"fw\", \"sgd\"]"), "unknown solver"),
    (("solvers = [\"fw\", \"afw\", \"extrafw\"]", "solvers = [\"fw\", \"fw\"]"), "duplicate"),
    (("iterations = 200", "iterations = 0"), "iterations"),
    (("iterations = 200", "iterations = 200\nepsilon = -1.0"), "epsilon"),
    (("iterations = 200", "iterations = 200\nwhatever = 1"), "unknown config keys"),
    (("radius = 1.0", "radius = -1.0"), "radius"),
    (("source = \"inline\"", "source = \"libsvm\""), "data.source"),
    (("iterations = 200", "iterations = 200\n[reference]\nsolver = \"x\"\niterations = 5"), "reference"),
])
def test_config_validation(edit, msg):
    text = QUAD.format(K=200, extra="").replace(*edit)
    with pytest.raises(ConfigError, match=msg):
        cfg = parse_config(text)
        run_experiment(cfg, write=False)


def test_gd_rejected_on_nsupport_and_nuclear():
    text = QUAD.format(K=5, extra="").replace('"extrafw"]', '"extrafw", "gd"]')
    for t in ('type = "nsupport"\nn = 2', ):
        with pytest.raises(ConfigError, match="projection"):
            parse_config(text.replace('type = "l2"', t))


def test_invalid_toml():
    with pytest.raises(ConfigError, match="TOML"):
        parse_config("task = ")


def test_shipped_configs_validate():
    paths = sorted(CONFIGS.glob("*.toml"))
    assert len(paths) >= 8
    for p in paths:
        load_config(p)


# run_experiment

def test_trace_invariants(tmp_path):
    K = 150
    res = run_experiment(quad(K), out=tmp_path)
    assert res.summary["f_ref_source"] == "analytic"
    assert res.summary["f_ref"] == pytest.approx(0.5)
    for name, tr in res.traces.items():
        assert len(tr) == K + 1
        for row in tr.rows:
            for key, v in row.items():
                assert v is None or math.isfinite(v), (name, key, v)
        assert np.all(tr.column("optimality") >= -1e-9)
        back = Trace.from_csv(tmp_path / f"{name}.csv")
        np.testing.assert_array_equal(back.column("f"), tr.column("f"))
    # the k = 0 certificate is only defined for FW
    assert res.traces["fw"].rows[0]["certificate"] is not None
    assert res.traces["extrafw"].rows[0]["certificate"] is None
    s = res.summary["solvers"]
    assert (s["extrafw"]["fo_calls"], s["extrafw"]["lmo_calls"]) == (2 * K, 2 * K)
    assert (s["fw"]["fo_calls"], s["fw"]["lmo_calls"]) == (K, K)
    assert (s["afw"]["fo_calls"], s["afw"]["lmo_calls"]) == (K, K)
    assert (tmp_path / "summary.json").exists() and (tmp_path / "timing.json").exists()


def test_running_min_certificate():
    tr = run_experiment(quad(100), write=False).traces["afw"]
    c, best = tr.column("certificate")[1:], tr.column("cert_best")[1:]
    np.testing.assert_array_equal(best, np.minimum.accumulate(c))


def test_early_stop_on_certificate():
    res = run_experiment(quad(2000, "epsilon = 1e-4"), write=False)
    for name, s in res.summary["solvers"].items():
        assert s["stopped_at"] is not None and s["stopped_at"] < 2000
        tr = res.traces[name]
        assert tr.rows[-1]["certificate"] <= 1e-4
        assert np.all(tr.column("certificate")[1:-1] > 1e-4)


def test_concurrent_matches_sequential(tmp_path):
    cfg = quad(100)
    run_experiment(cfg, out=tmp_path / "a", jobs=1)
    run_experiment(cfg, out=tmp_path / "b", jobs=3)
    for s in cfg.solvers:
        assert (tmp_path / "a" / f"{s}.csv").read_bytes() == (tmp_path / "b" / f"{s}.csv").read_bytes()


def test_quadratic_slopes_at_1000():
    tr = run_experiment(quad(1000), write=False).traces
    assert slope_fit(tr["extrafw"], (100, 1000)) <= -1.7
    fw = slope_fit(tr["fw"], (100, 1000), clip=True)
    assert -1.3 <= fw <= -0.7, f"FW slope {fw}"


def test_l1_logistic_nnz_bounded_by_k():
    cfg = load_config(CONFIGS / "logistic_l1_synth.toml")
    cfg.iterations = 200
    cfg.reference = None
    res = run_experiment(cfg, write=False)
    for name in ("fw", "afw", "extrafw"):
        tr = res.traces[name]
        assert np.all(tr.column("nnz") <= tr.column("k"))


def test_completion_gap_grows_with_radius():
    # FW usually sets f_ref itself here, so compare f(ExtraFW) - f(FW) at k = 500
    diffs = []
    for R in ("1", "2.5", "5"):
        res = run_experiment(load_config(CONFIGS / f"completion_R{R}.toml"), write=False)
        s = res.summary["solvers"]
        diffs.append(s["extrafw"]["f"] - s["fw"]["f"])
    assert diffs[0] > diffs[1] > diffs[2], diffs


def test_data_configs_run_on_fixtures(fixture_data, tmp_path):
    for name in ("mushrooms_l2", "mnist_l2_R50"):
        cfg = load_config(CONFIGS / f"{name}.toml")
        cfg.iterations = 30
        res = run_experiment(cfg, out=tmp_path / name)
        assert "test_accuracy" in res.summary["solvers"]["extrafw"]


# metrics

def test_sparsity_examples():
    assert sparsity(np.array([0.0, 2.0, 0.0])) == 1
    assert sparsity(np.array([1e-15, 1.0]), tol=1e-12) == 1


def test_numerical_rank_examples(rng):
    K = ObservedEntries.from_triplets([(0, 0, 1.0)], (4, 3))
    p, q = np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0])
    atom = RankOneAtom(-2.0, p, q)
    assert numerical_rank(atom) == 1
    X = LowRankIterate.zero(K).mix(atom, 1.0).mix(atom, 0.5)
    assert X.n_atoms == 2 and numerical_rank(X) == 1
    assert numerical_rank(rng.standard_normal((5, 3))) == 3


def test_slope_fit_examples():
    ks = np.arange(1, 201)
    assert slope_fit(_trace(3.0 / ks), (1, 200)) == pytest.approx(-1.0, abs=1e-6)
    assert slope_fit(_trace(3.0 / ks ** 2), (1, 200)) == pytest.approx(-2.0, abs=1e-6)
    assert slope_fit(_trace(np.full(200, 0.7)), (1, 200)) == pytest.approx(0.0, abs=1e-9)
    assert slope_fit(_trace(3.0 / ks), (50, 100)) == pytest.approx(-1.0, abs=1e-6)


def test_slope_fit_non_positive():
    vals = np.r_[np.ones(10), 0.0]
    with pytest.raises(NonPositiveGap):
        slope_fit(_trace(vals), (1, 11))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        slope_fit(_trace(vals), (1, 11), clip=True)
    assert w and "clipped" in str(w[0].message)
