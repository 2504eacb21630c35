import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbic.core import ChainConfig, chain_seed, wbic_temperature
from wbic.data import ingest_csv
from wbic.harness import (
    FIG4_N,
    FIGURE_COLUMNS,
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    emit,
    failures,
    figure_csv,
    figure_rows,
    parse,
    pima_models,
    pine_models,
    read_records,
    run_experiment,
    summarize,
    summary_csv,
)
from wbic.normal import NormalModelSpec, evidence_gap_normal, optimal_temperature_normal

SMALL = dict(chain=ChainConfig(1500, 300), pp_chain=ChainConfig(600, 100), schedule_m=8)


def _rec(value, rep=0, model="m", method="wbic", se=0.1, exp="table2", **kw):
    return ResultRecord(exp, rep, model, method, value, se, (1, rep), **kw)


finite = st.floats(-1e6, 1e6, allow_nan=False)
records = st.builds(
    ResultRecord,
    experiment=st.sampled_from(["table2", "fig5"]),
    replicate=st.integers(0, 50),
    model=st.sampled_from(["pine-1", "pine-2", "mixture"]),
    method=st.sampled_from(["wbic", "pp_standard", "pp_corrected", "exact"]),
    log_evidence=st.one_of(st.none(), finite),
    std_error=st.one_of(st.none(), st.floats(0, 10)),
    seed=st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=4).map(tuple),
    wall_time=st.one_of(st.none(), st.floats(0, 100)),
    aux=st.dictionaries(st.sampled_from(["t_w", "m", "note"]), st.one_of(finite, st.text(max_size=5))),
    error=st.one_of(st.none(), st.text(max_size=20)),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(records, max_size=10))
def test_emit_parse_round_trip(recs):
    assert parse(emit(recs)) == recs


def test_non_finite_values_become_null():
    r = _rec(float("nan"), se=float("inf"))
    assert r.log_evidence is None and r.std_error is None and not r.ok
    assert '"log_evidence": null' in r.to_json()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["a", "b"]), st.sampled_from(["wbic", "exact"]),
                          st.floats(-500, 0)), min_size=1, max_size=30), st.randoms())
def test_summary_is_order_invariant(items, rnd):
    recs = [_rec(v, rep=i, model=m, method=meth) for i, (m, meth, v) in enumerate(items)]
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    assert summary_csv(summarize(recs)) == summary_csv(summarize(shuffled))


def test_identical_values_give_zero_se():
    rows = summarize([_rec(-308.339, rep=r) for r in range(20)])
    assert rows[0]["count"] == 20 and rows[0]["se"] == 0.0
    assert rows[0]["mean"] == pytest.approx(-308.339, abs=1e-12)


def test_mean_and_se_of_the_mean():
    vals = [-1.0, -2.0, -4.0, -7.0]
    row = summarize([_rec(v, rep=i) for i, v in enumerate(vals)])[0]
    assert row["mean"] == pytest.approx(np.mean(vals))
    assert row["se"] == pytest.approx(np.std(vals, ddof=1) / 2)


def test_bayes_factor_rows():
    recs = [_rec(-310.1283, model="pine-1", method="exact", se=None),
            _rec(-301.7046, model="pine-2", method="exact", se=None)]
    recs += [_rec(-308.3 + 0.01 * r, rep=r, model="pine-1") for r in range(5)]
    recs += [_rec(-299.8 - 0.01 * r, rep=r, model="pine-2") for r in range(5)]
    rows = {(r["method"], r["quantity"]): r for r in summarize(recs)}
    exact = rows[("exact", "bf21")]
    assert exact["mean"] == pytest.approx(math.exp(-301.7046 + 310.1283)) and exact["se"] is None
    w = rows[("wbic", "bf21")]
    se1 = np.std([-308.3 + 0.01 * r for r in range(5)], ddof=1) / math.sqrt(5)
    assert w["se"] == pytest.approx(w["mean"] * math.hypot(se1, se1))
    assert summary_csv([exact]).splitlines()[1].endswith(",")  # empty SE cell


def test_corrected_beats_standard_fraction():
    recs = [_rec(-10.0, model="pine-1", method="exact", se=None)]
    for r, (s, c) in enumerate([(-10.5, -10.1), (-10.2, -10.3), (-9.0, -9.9)]):
        recs += [_rec(s, rep=r, model="pine-1", method="pp_standard"), _rec(c, rep=r, model="pine-1", method="pp_corrected")]
    row = [x for x in summarize(recs) if x["quantity"] == "corrected_beats_standard"][0]
    assert row["count"] == 3 and row["mean"] == pytest.approx(2 / 3)


def test_failed_records_are_excluded_from_summary():
    recs = [_rec(-1.0), _rec(None, rep=1, error="boom")]
    assert summarize(recs)[0]["count"] == 1
    assert failures(recs) == [recs[1]]
    with pytest.raises(ValueError):
        summarize([])


@pytest.mark.parametrize("kwargs,match", [
    (dict(experiment="table9"), "unknown experiment"),
    (dict(experiment="fig5", replicates=0), "replicate count"),
    (dict(experiment="fig5", base_seed=-1), "base_seed"),
    (dict(experiment="table2"), "needs a pine dataset"),
    (dict(experiment="table2", data_path="/no/such.csv"), "does not exist"),
    (dict(experiment="table2", prior="vague", data_path=__file__), "informative prior"),
    (dict(experiment="fig5", prior="flat"), "unknown prior"),
    (dict(experiment="fig5", schedule_m=0), "m"),
    (dict(experiment="fig5", workers=0), "workers"),
])
def test_config_errors(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        ExperimentConfig(**kwargs)


def test_pine_table_run(synthetic_pine, tmp_path):
    config = ExperimentConfig("table2", base_seed=5, replicates=3, data_path=synthetic_pine, **SMALL)
    buf = io.StringIO()
    recs = run_experiment(config, buf)
    assert parse(buf.getvalue()) == recs
    assert not failures(recs)
    by = {}
    for r in recs:
        by.setdefault((r.model, r.method), []).append(r)
    for k in ("pine-1", "pine-2"):
        assert len(by[(k, "exact")]) == 1 and len(by[(k, "wbic")]) == 3
        assert len(by[(k, "pp_standard")]) == 3 and len(by[(k, "pp_corrected")]) == 3
        oracle = by[(k, "oracle_t")][0].aux
        assert oracle["t_w"] == pytest.approx(wbic_temperature(42))
        assert 0 < oracle["t_star"] < 1
    # seeds are (base, k, r, 0) for WBIC and (base, k, r, 1) for PP
    assert by[("pine-2", "wbic")][2].seed == (5, 1, 2, 0)
    assert by[("pine-1", "pp_corrected")][1].seed == (5, 0, 1, 1)
    # exact records agree with the model
    models = pine_models(ingest_csv(synthetic_pine, "pine"))
    assert by[("pine-1", "exact")][0].log_evidence == models[0].log_evidence()
    # more replicates leave the existing ones unchanged
    more = run_experiment(ExperimentConfig("table2", base_seed=5, replicates=4, data_path=synthetic_pine, **SMALL))
    assert set(emit(recs).splitlines()) <= set(emit(more).splitlines())


def test_reruns_are_byte_identical(synthetic_pine):
    config = ExperimentConfig("table3", base_seed=9, replicates=2, data_path=synthetic_pine, model="pine-1", **SMALL)
    a, b = io.StringIO(), io.StringIO()
    run_experiment(config, a)
    run_experiment(config, b)
    assert a.getvalue() == b.getvalue()
    assert all(r.model == "pine-1" for r in parse(a.getvalue()))


def test_parallel_workers_give_identical_output(synthetic_pine):
    base = dict(base_seed=1, replicates=2, data_path=synthetic_pine, **SMALL)
    a = run_experiment(ExperimentConfig("table2", **base))
    b = run_experiment(ExperimentConfig("table2", workers=2, **base))
    assert emit(a) == emit(b)


def test_wall_time_is_opt_in(synthetic_pine):
    base = dict(base_seed=1, replicates=1, data_path=synthetic_pine, model="pine-1", **SMALL)
    assert all(r.wall_time is None for r in run_experiment(ExperimentConfig("table2", **base)))
    timed = run_experiment(ExperimentConfig("table2", record_wall_time=True, **base))
    assert all(r.wall_time is not None and r.wall_time >= 0 for r in timed)


def test_pima_tables_have_no_exact_record(synthetic_pima):
    config = ExperimentConfig("table4", replicates=1, data_path=synthetic_pima, model="pima-2", **SMALL)
    recs = run_experiment(config)
    assert not failures(recs)
    assert {r.method for r in recs} == {"wbic", "pp_standard", "pp_corrected"}
    assert {r.model for r in recs} == {"pima-2"}


def test_pima_models_priors(synthetic_pima):
    ds = ingest_csv(synthetic_pima, "pima")
    vague = pima_models(ds, "vague")
    assert [m.dimension for m in vague] == [5, 6]
    np.testing.assert_allclose(np.diag(np.linalg.inv(vague[0].spec._prior_prec)), 100.0)
    with pytest.raises(ConfigError):
        pima_models(ds, "informative")
    with pytest.raises(ConfigError, match="expected a pine dataset"):
        pine_models(ds)


def test_task_failure_becomes_error_record(synthetic_pine, monkeypatch):
    import wbic.harness as harness

    real = harness.wbic_estimate

    def flaky(model, chain, seed):
        if seed.spawn_key == (0, 1, 0):  # WBIC chain of pine-1, replicate 1
            raise FloatingPointError("chain blew up")
        return real(model, chain, seed)

    monkeypatch.setattr(harness, "wbic_estimate", flaky)
    config = ExperimentConfig("table2", replicates=2, data_path=synthetic_pine, model="pine-1", **SMALL)
    recs = run_experiment(config)
    bad = failures(recs)
    assert len(bad) == 1
    assert bad[0].replicate == 1 and bad[0].method == "wbic" and "chain blew up" in bad[0].error
    assert sum(r.ok for r in recs) == len(recs) - 1


def test_fig4_matches_direct_computation():
    recs = run_experiment(ExperimentConfig("fig4", base_seed=3))
    assert len(recs) == len(FIG4_N) and not failures(recs)
    rows = figure_rows(recs, "fig4")
    assert [r["n"] for r in rows] == list(FIG4_N)
    # spot check one record against an independent computation on the same seed
    i = FIG4_N.index(60)
    y = np.random.default_rng(chain_seed(3, i)).standard_normal(60)
    spec = NormalModelSpec.mean_corrected(y, 1.0)
    assert rows[i]["t_star"] == pytest.approx(optimal_temperature_normal(spec), abs=1e-12)
    assert rows[i]["difference"] == pytest.approx(evidence_gap_normal(spec, wbic_temperature(60)), abs=1e-12)


@pytest.mark.parametrize("exp,reps", [("fig1", 1), ("fig2a", 3), ("fig2b", 4), ("fig3", 2)])
def test_normal_figures(exp, reps):
    recs = run_experiment(ExperimentConfig(exp, replicates=reps))
    assert not failures(recs)
    text = figure_csv(recs, exp)
    lines = text.splitlines()
    assert lines[0] == ",".join(FIGURE_COLUMNS[exp])
    expected = {"fig1": 3 * 2 * 8, "fig2a": 4 * reps, "fig2b": 3 * reps, "fig3": 2 * reps}[exp]
    assert len(lines) - 1 == expected


def test_fig5_small(tmp_path):
    config = ExperimentConfig("fig5", replicates=2, chain=ChainConfig(300, 50), pp_chain=ChainConfig(150, 30),
                              schedule_m=5, synthetic={"n": 30})
    recs = run_experiment(config)
    assert not failures(recs)
    rows = figure_rows(recs, "fig5")
    assert [r["dataset"] for r in rows] == [0, 1]
    wbic = [r for r in recs if r.method == "wbic"]
    assert wbic[1].seed == (0, 1, 1)
    with pytest.raises(ConfigError):
        figure_rows(recs, "table2")


def test_read_records(tmp_path):
    recs = [_rec(-1.0), _rec(-2.0, rep=1)]
    p = tmp_path / "r.jsonl"
    p.write_text(emit(recs))
    assert read_records(p) == recs


def test_summary_csv_round_trips_floats():
    v = -308.33901234567891
    text = summary_csv(summarize([_rec(v, rep=0), _rec(v, rep=1)]))
    assert float(text.splitlines()[1].split(",")[5]) == v
