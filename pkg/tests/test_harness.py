import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iqswitch.harness import (
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    ConfigError,
    ExperimentConfig,
    across_seed_mean_series,
    fit_exponent,
    fit_rows,
    load_config,
    make_policy,
    parse_config,
    read_csv,
    run_all,
    run_replication,
    sweep_and_fit,
    with_overrides,
    write_csv,
    write_record,
    write_sweep,
)
from iqswitch.policies import ParameterInfeasible, derive_params, monitor_H, monitor_W

SMALL = dict(n_list=[3, 4], fn_rule="n", c_b=4.0, c_d=4.0, c_s=1.0, periods=3, seeds=[0, 1], relaxed=True)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


# -- monitors ---------------------------------------------------------------

def test_monitor_W_examples():
    n, d = 3, 10
    assert monitor_W(np.zeros((n, n), dtype=int), d, d, n) == 1
    full = np.full((n, n), 100)
    assert monitor_W(full, 40, d, n) == 0
    # at t = d the threshold is a single packet
    one = np.ones((n, n), dtype=int)
    assert monitor_W(one, d, d, n) == 1
    assert monitor_W(one + 1, d, d, n) == 0


def test_monitor_H_examples():
    a = np.array([[3, 0], [0, 0]])
    assert monitor_H(a, 3) == 0
    assert monitor_H(a, 2) == 1
    assert monitor_H(a.T, 2) == 1
    assert monitor_H(np.zeros((2, 2), dtype=int), 0) == 0


@given(st.integers(2, 5).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.integers(0, 9), min_size=n * n, max_size=n * n))),
       st.integers(0, 30))
def test_monitor_H_matches_definition(arg, s):
    n, vals = arg
    a = np.array(vals).reshape(n, n)
    expect = any(sum(vals[i * n:(i + 1) * n]) > s for i in range(n)) or any(
        sum(vals[i * n + j] for i in range(n)) > s for j in range(n))
    assert monitor_H(a, s) == int(expect)


# -- config -----------------------------------------------------------------

def test_config_defaults_and_parsing():
    cfg = parse_config("""
        # sweep
        policy = maxweight
        n_list = 3, 4
        fn_rule = 2n
        seeds = 7
        relaxed = yes
    """)
    assert cfg.policy == "maxweight"
    assert cfg.pairs() == [(3, 6), (4, 8)]
    assert cfg.seeds == [7] and cfg.relaxed
    assert cfg.periods == 10


def test_config_overrides_win():
    cfg = parse_config("periods = 4\n", {"periods": "2"})
    assert cfg.periods == 2


def test_explicit_fn_list():
    cfg = parse_config("n_list = 3,4\nfn_rule = 5,9\n")
    assert cfg.pairs() == [(3, 5), (4, 9)]


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "periods\n",
    "periods = x\n",
    "relaxed = maybe\n",
    "policy = fifo\n",
    "periods = 0\n",
    "n_list = 5\nfn_rule = 4\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_names_path(tmp_path):
    p = tmp_path / "nope.cfg"
    with pytest.raises(ConfigError, match="nope.cfg"):
        load_config(p)


def test_infeasible_constants_refused_unless_relaxed():
    cfg = small(relaxed=False)
    with pytest.raises(ParameterInfeasible):
        make_policy(cfg, 3, 3)
    make_policy(small(), 3, 3)


# -- replications -----------------------------------------------------------

@pytest.mark.parametrize("policy", ["three-phase", "standard-batching", "maxweight"])
def test_zero_arrivals_stay_empty(policy):
    rec = run_replication(small(policy=policy, zero_arrivals=True), 3, 3, 0)
    assert rec.max_total_queue == 0 and rec.mean_total_queue == 0
    assert rec.violations == []
    if policy != "maxweight":
        assert set(rec.U) == {0} and set(rec.B) == {0}
    if policy == "three-phase":
        assert set(rec.W) == {1}  # nothing ever arrives, so every queue starves
    if policy == "standard-batching":
        assert set(rec.W) == {0}  # d = b leaves an empty monitoring window


@pytest.mark.parametrize("policy", ["three-phase", "standard-batching", "maxweight"])
def test_small_runs_keep_invariants(policy):
    for n in (3, 4):
        rec = run_replication(small(policy=policy), n, n, 3)
        assert rec.violations == []
        assert (rec.series >= 0).all()
        p = derive_params(n, n, 4.0, 4.0, 1.0)
        lag = {"three-phase": p.d, "standard-batching": p.b, "maxweight": 0}[policy]
        assert len(rec.series) == 3 * p.b + lag


def test_three_phase_record_shape():
    rec = run_replication(small(), 4, 4, 1)
    assert len(rec.U) >= rec.periods and len(rec.B) >= rec.periods
    assert rec.B[0] == 0
    assert 0.0 <= rec.frac_Uk_pos <= 1.0
    assert rec.bound_3nd == 3 * 4 * rec.d


def test_replication_is_deterministic():
    a = run_replication(small(), 4, 4, 5)
    b = run_replication(small(), 4, 4, 5)
    assert np.array_equal(a.series, b.series)
    assert a.U == b.U and a.B == b.B


def test_policies_see_the_same_arrivals():
    # both start empty, so the second slot sees exactly the first slot's arrivals
    recs = [run_replication(small(policy=p, periods=1), 3, 3, 2) for p in ("three-phase", "maxweight")]
    assert recs[0].series[0] == recs[1].series[0] == 0
    assert recs[0].series[1] == recs[1].series[1]


def test_snapshots_at_period_boundaries():
    rec = run_replication(small(snapshot_period_boundaries=True), 3, 3, 0)
    assert len(rec.snapshots) == len(rec.series) // rec.b
    assert all(s.shape == (3, 3) for s in rec.snapshots)


def test_run_all_sorted():
    recs = run_all(small(n_list=[4, 3], seeds=[1, 0]))
    assert [(r.n, r.seed) for r in recs] == [(3, 0), (3, 1), (4, 0), (4, 1)]


def test_across_seed_mean():
    recs = run_all(small(n_list=[3]))
    mean = across_seed_mean_series(recs)
    assert np.allclose(mean, (recs[0].series + recs[1].series) / 2)


# -- fitting and output -----------------------------------------------------

def test_fit_exact_power_law():
    ns = [25, 36, 49, 64]
    alpha, c = fit_exponent(ns, [3.0 * n**2.5 for n in ns])
    assert abs(alpha - 2.5) < 1e-9
    assert c == pytest.approx(math.log(3.0))
    assert abs(fit_exponent(ns, [7.0] * 4)[0]) < 1e-12


def test_fit_needs_two_points():
    assert fit_exponent([25], [10.0]) is None
    assert fit_exponent([25, 25], [1.0, 2.0]) is None
    res = fit_rows([{**{c: 1 for c in SWEEP_COLUMNS}, "n": 25, "f_n": 25, "mean_total_queue": 3.0}])
    assert res.alpha is None and "fit omitted" in res.notice


def test_empty_table_writes_header_only(tmp_path):
    p = write_csv([], tmp_path / "x.csv", SWEEP_COLUMNS)
    assert p.read_text() == ",".join(SWEEP_COLUMNS) + "\n"


def test_sweep_roundtrip_and_refit(tmp_path):
    res = sweep_and_fit(small())
    sweep, summary = write_sweep(res, tmp_path)
    rows = read_csv(sweep)
    assert list(rows[0].keys()) == SWEEP_COLUMNS
    assert list(read_csv(summary)[0].keys()) == SUMMARY_COLUMNS
    for r, orig in zip(rows, res.rows):
        assert float(r["mean_total_queue"]) == orig["mean_total_queue"]
    again = fit_rows(rows)
    assert again.alpha == pytest.approx(res.alpha, abs=1e-12)


def test_write_record_files(tmp_path):
    rec = run_replication(small(snapshot_period_boundaries=True), 3, 3, 0)
    paths = write_record(rec, tmp_path, series_every=10)
    names = sorted(p.name for p in paths)
    assert any(n.endswith("_periods.csv") for n in names)
    assert any(n.endswith("_snapshots.csv") for n in names)
    series = read_csv([p for p in paths if p.name.endswith("_series.csv")][0])
    assert len(series) == math.ceil(len(rec.series) / 10)


def test_workers_give_identical_csv(tmp_path):
    cfg = small()
    write_sweep(sweep_and_fit(cfg), tmp_path / "w1")
    write_sweep(sweep_and_fit(with_overrides(cfg, workers=2)), tmp_path / "w2")
    for name in ("sweep.csv", "sweep_summary.csv"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()
