import math

import numpy as np
import pytest

from tailsim.clipping import Schedule
from tailsim.harness import (CSV_COLUMNS, SCHEMA_VERSION, ConfigError,
                             MetricsRecord, build_problem, config_from_tree,
                             fit_loglog_slope, format_csv, format_sweep_csv,
                             load_grid, parse_config, read_metrics_csv,
                             run_experiment, sweep, write_csv)
from tailsim.problems import objective_value
from tailsim.streams import SWEEP, derive_seed

MINIMAL = {
    "problem": {"kind": "gaussian", "rows": 30, "cols": 4},
    "algorithm": {"inner": {"lr": 0.1}},
    "topology": {"rounds": 10},
}


def _tree(**overrides):
    import copy
    t = copy.deepcopy(MINIMAL)
    for dotted, v in overrides.items():
        node = t
        parts = dotted.split("__")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = v
    return t


def _strip_wall(csv_text):
    return "\n".join(",".join(ln.split(",")[:-1]) for ln in csv_text.splitlines())


# ---------------------------------------------------------------------------
# config parsing


def test_minimal_config_defaults():
    cfg = config_from_tree(_tree())
    assert cfg.problem_kind == "gaussian"
    assert cfg.rows == 30 and cfg.cols == 4
    assert cfg.noise.family == "none"
    assert cfg.noise_mode == "label-contamination"
    assert cfg.inner.clip_kind == "none"
    assert cfg.inner.local_steps == 1 and cfg.inner.batch_size is None
    assert math.isinf(cfg.inner.u_schedule(1))
    assert cfg.inner.d_schedule(1) == 0.0
    assert cfg.outer_kind == "avg"
    assert cfg.outer_eta(3) == 1.0
    assert cfg.beta1 == 0.9 and cfg.beta2 == 0.99 and cfg.tau == 1e-8
    assert cfg.projection_radius is None
    assert cfg.nodes == 1 and cfg.rounds == 10
    assert cfg.participation.mode == "full" and cfg.participation.rate == 1.0
    assert cfg.seed == 0 and cfg.metrics_every == 1 and cfg.output is None


def test_bare_number_is_constant_schedule():
    cfg = config_from_tree(_tree(algorithm__inner__lr=0.25))
    assert cfg.inner.lr_schedule.kind == "constant"
    assert cfg.inner.lr_schedule(77) == 0.25


def test_schedule_mappings():
    cfg = config_from_tree(_tree(
        algorithm__inner__lr={"kind": "harmonic", "r": 2.0},
        algorithm__inner__u={"kind": "scaled-power", "coefficient": 1.5,
                             "exponent": 0.25},
        algorithm__outer__eta={"kind": "power-law", "exponent": -0.5}))
    assert cfg.inner.lr_schedule(1) == 1.0
    assert cfg.inner.u_schedule(16) == 1.5 * 2.0
    assert cfg.outer_eta(4) == 0.5


def test_schedule_error_forms():
    for bad in ({"kind": "geometric"}, {"kind": "harmonic"}, "fast",
                {"kind": "constant", "coefficient": 1, "extra": 2}):
        with pytest.raises(ConfigError) as e:
            config_from_tree(_tree(algorithm__inner__lr=bad))
        assert "algorithm.inner.lr" in str(e.value)


def test_participation_rate_error_names_field():
    t = _tree(topology__participation={"mode": "uniform-subsample", "rate": 1.5})
    with pytest.raises(ConfigError) as e:
        config_from_tree(t)
    assert "topology.participation.rate" in str(e.value)


def test_full_mode_with_partial_rate_rejected():
    t = _tree(topology__participation={"mode": "full", "rate": 0.5})
    with pytest.raises(ConfigError) as e:
        config_from_tree(t)
    assert "full participation requires rate=1" in str(e.value)


def test_threshold_ordering_error():
    t = _tree(algorithm__inner__u=0.5, algorithm__inner__d=1.0,
              algorithm__inner__clip="biclip-coordinate")
    with pytest.raises(ConfigError) as e:
        config_from_tree(t)
    msg = str(e.value)
    assert "algorithm.inner" in msg and "lower" in msg


def test_unknown_keys_named():
    t = _tree()
    t["extra_top"] = 1
    t["problem"]["bogus"] = 2
    with pytest.raises(ConfigError) as e:
        config_from_tree(t)
    msg = str(e.value)
    assert "unknown key: extra_top" in msg
    assert "unknown key: problem.bogus" in msg


def test_all_violations_collected():
    t = _tree(problem__rows=0, topology__rounds=0, algorithm__outer__tau=0.0,
              algorithm__outer__beta1=1.5)
    with pytest.raises(ConfigError) as e:
        config_from_tree(t)
    v = e.value.violations
    assert len(v) >= 4
    joined = "\n".join(v)
    for frag in ("problem.rows", "topology.rounds", "algorithm.outer.tau",
                 "algorithm.outer.beta1"):
        assert frag in joined


def test_version_check():
    with pytest.raises(ConfigError) as e:
        config_from_tree(_tree(version=SCHEMA_VERSION + 1))
    assert "version" in str(e.value)
    config_from_tree(_tree(version=SCHEMA_VERSION))


def test_required_fields():
    t = _tree()
    del t["problem"]["rows"]
    del t["topology"]["rounds"]
    del t["algorithm"]["inner"]["lr"]
    with pytest.raises(ConfigError) as e:
        config_from_tree(t)
    msg = str(e.value)
    assert "problem.rows" in msg
    assert "topology.rounds" in msg
    assert "algorithm.inner.lr" in msg


def test_rows_cols_ordering():
    with pytest.raises(ConfigError) as e:
        config_from_tree(_tree(problem__rows=3, problem__cols=5))
    assert "rows" in str(e.value)


def test_common_fraction_open_interval():
    for bad in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(ConfigError) as e:
            config_from_tree(_tree(problem__common_fraction=bad))
        assert "common_fraction" in str(e.value)
    cfg = config_from_tree(_tree(problem__kind="syntoken",
                                 problem__common_fraction=0.2))
    assert cfg.common_fraction == 0.2


def test_noise_spec_from_tree():
    cfg = config_from_tree(_tree(problem__noise={"family": "student-t",
                                                 "scale": 2.0, "tail": 1.3}))
    assert cfg.noise.family == "student-t"
    assert cfg.noise.scale == 2.0 and cfg.noise.tail == 1.3
    with pytest.raises(ConfigError) as e:
        config_from_tree(_tree(problem__noise={"family": "student-t", "tail": 3.0}))
    assert "problem.noise" in str(e.value)


def test_parse_config_text():
    cfg = parse_config("""
problem: {kind: gaussian, rows: 12, cols: 3}
algorithm:
  inner: {lr: 0.05}
topology: {rounds: 4}
seed: 9
""")
    assert cfg.rows == 12 and cfg.seed == 9
    with pytest.raises(ConfigError):
        parse_config("problem: [not, a, mapping")
    with pytest.raises(ConfigError):
        parse_config("")  # empty document misses required fields


# ---------------------------------------------------------------------------
# running


def test_run_experiment_matches_gd_oracle():
    t = _tree(problem__rows=40, problem__cols=5, topology__rounds=200,
              algorithm__inner__lr={"kind": "harmonic", "r": 2.0}, seed=3)
    cfg = config_from_tree(t)
    records = run_experiment(cfg)
    assert len(records) == 200
    # straight-line gradient descent on the same quadratic
    problem = build_problem(cfg)
    A, b = problem.global_gram
    from tailsim.problems import exact_optimum
    f_star = objective_value(problem, exact_optimum(problem).x)
    x = np.zeros(5)
    for t_idx, rec in enumerate(records, start=1):
        x = x - (2.0 / (t_idx + 1)) * (A @ x - b)
        assert rec.round == t_idx
        gap = objective_value(problem, x) - f_star
        assert rec.objective_gap == pytest.approx(gap, rel=1e-9, abs=1e-12)
    assert records[-1].objective_gap < 0.01 * records[0].objective_gap
    assert not records[-1].diverged


def test_run_experiment_single_round():
    cfg = config_from_tree(_tree(topology__rounds=1))
    records = run_experiment(cfg)
    assert len(records) == 1
    assert records[0].round == 1


def test_run_experiment_metrics_cadence():
    cfg = config_from_tree(_tree(topology__rounds=25, metrics_every=10))
    records = run_experiment(cfg)
    assert [r.round for r in records] == [10, 20, 25]


def test_run_experiment_running_min_exact_at_cadence():
    # the running minimum tracks every round, not just the recorded ones
    t = _tree(problem__rows=30, problem__cols=4, topology__rounds=40,
              algorithm__inner__lr=0.4, seed=5)
    every = [r.grad_norm_sq for r in run_experiment(config_from_tree(t))]
    t["metrics_every"] = 40
    sparse = run_experiment(config_from_tree(t))
    assert sparse[-1].running_min_grad_sq == min(every)


def test_run_experiment_deterministic_replay():
    t = _tree(problem__rows=50, problem__cols=6, topology__rounds=30,
              topology__nodes=5, topology__local_steps=3,
              algorithm__inner__lr=0.05, algorithm__inner__batch_size=4,
              problem__noise={"family": "student-t", "tail": 1.5}, seed=11)
    a = format_csv(run_experiment(config_from_tree(t)))
    b = format_csv(run_experiment(config_from_tree(t)))
    assert _strip_wall(a) == _strip_wall(b)


def test_run_experiment_thread_count_invisible():
    t = _tree(problem__rows=60, problem__cols=5, topology__rounds=20,
              topology__nodes=6, topology__local_steps=2,
              algorithm__inner__lr=0.05, algorithm__inner__batch_size=3,
              problem__noise={"family": "student-t", "tail": 1.5}, seed=13)
    seq = format_csv(run_experiment(config_from_tree(t), threads=1))
    par = format_csv(run_experiment(config_from_tree(t), threads=8))
    assert _strip_wall(seq) == _strip_wall(par)


def test_run_experiment_divergence_truncates():
    t = _tree(problem__rows=30, problem__cols=4, topology__rounds=500,
              algorithm__inner__lr=100.0, metrics_every=1000, seed=7)
    records = run_experiment(config_from_tree(t))
    assert records[-1].diverged
    assert records[-1].round < 500  # stopped at the diverging round


def test_running_min_nonincreasing():
    t = _tree(problem__rows=40, problem__cols=5, topology__rounds=60,
              topology__nodes=4, algorithm__inner__lr=0.1,
              algorithm__inner__batch_size=2,
              problem__noise={"family": "gaussian"}, seed=17)
    records = run_experiment(config_from_tree(t))
    mins = [r.running_min_grad_sq for r in records]
    assert all(b <= a for a, b in zip(mins, mins[1:]))


def test_build_problem_modes():
    cfg = config_from_tree(_tree(problem__kind="syntoken", topology__nodes=3,
                                 problem__noise={"family": "student-t",
                                                 "tail": 1.5}))
    p = build_problem(cfg)
    assert p.num_nodes == 3
    assert set(np.unique(p.features)) <= {0.0, 1.0}
    assert not np.array_equal(p.labels, p.labels_true)  # contaminated
    cfg2 = config_from_tree(_tree(problem__noise_mode="additive-gradient",
                                  problem__noise={"family": "gaussian"}))
    p2 = build_problem(cfg2)
    assert p2.noise_mode == "additive-gradient"
    assert p2.grad_noise.family == "gaussian"
    assert np.array_equal(p2.labels, p2.labels_true)


# ---------------------------------------------------------------------------
# CSV


def _rec(round=1, **kw):
    base = dict(objective_gap=1.5, dist_to_truth=2.0, grad_norm_sq=0.25,
                running_min_grad_sq=0.25, delta_inf_norm=0.1, diverged=False,
                wall_ms=12.5)
    base.update(kw)
    return MetricsRecord(round=round, **base)


def test_csv_header_and_cardinality():
    assert format_csv([]) == ",".join(CSV_COLUMNS) + "\n"
    two = format_csv([_rec()]).splitlines()
    assert len(two) == 2
    assert two[0] == ",".join(CSV_COLUMNS)


def test_csv_round_trip_bitexact(tmp_path):
    vals = np.random.default_rng(19).standard_normal(8)
    records = [
        _rec(round=i + 1, objective_gap=float(v * 1e-7),
             grad_norm_sq=float(abs(v)), running_min_grad_sq=float(abs(v)),
             dist_to_truth=float(abs(v) * math.pi), diverged=bool(i == 7))
        for i, v in enumerate(vals)
    ]
    path = tmp_path / "m.csv"
    write_csv(records, path)
    cols = read_metrics_csv(path)
    assert np.array_equal(cols["round"], np.arange(1, 9))
    for i, r in enumerate(records):
        assert cols["objective_gap"][i] == r.objective_gap
        assert cols["dist_to_truth"][i] == r.dist_to_truth
        assert cols["grad_norm_sq"][i] == r.grad_norm_sq
        assert cols["diverged"][i] == r.diverged


def test_write_csv_error_context(tmp_path):
    with pytest.raises(OSError) as e:
        write_csv([], tmp_path / "no" / "such" / "dir.csv")
    assert "writing" in str(e.value)


def test_read_metrics_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError):
        read_metrics_csv(empty)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b\n1,2,3\n")
    with pytest.raises(ValueError):
        read_metrics_csv(ragged)
    with pytest.raises(OSError):
        read_metrics_csv(tmp_path / "missing.csv")


# ---------------------------------------------------------------------------
# rate estimation


def test_fit_loglog_examples():
    t = np.arange(1, 1001)
    assert fit_loglog_slope(t, t ** -0.5, burn_in=0.0) == pytest.approx(-0.5, abs=1e-9)
    assert fit_loglog_slope(t, np.full(1000, 2.0), burn_in=0.0) == pytest.approx(0.0, abs=1e-12)
    assert fit_loglog_slope(t, 3.0 * t ** -0.125, burn_in=0.0) == pytest.approx(-0.125, abs=1e-9)


def test_fit_loglog_scale_invariant():
    t = np.arange(1, 301)
    v = t ** -0.3 * (1 + 0.1 * np.sin(t))
    s1 = fit_loglog_slope(t, v, burn_in=0.2)
    s2 = fit_loglog_slope(t, 1e6 * v, burn_in=0.2)
    assert abs(s1 - s2) < 1e-12


def test_fit_loglog_burn_in_discards_prefix():
    t = np.arange(1, 101)
    v = np.concatenate([np.full(20, 50.0), (t[20:] ** -1.0)])
    full = fit_loglog_slope(t, v, burn_in=0.0)
    late = fit_loglog_slope(t, v, burn_in=0.2)
    assert late == pytest.approx(-1.0, abs=1e-9)
    assert abs(full - (-1.0)) > 0.5  # the prefix distorts the undiscarded fit


def test_fit_loglog_errors():
    t = np.arange(1, 101)
    with pytest.raises(ValueError):
        fit_loglog_slope(t[:5], t[:5] ** -0.5)
    with pytest.raises(ValueError):
        fit_loglog_slope(t, np.concatenate([np.zeros(50), t[50:] ** -0.5]),
                         burn_in=0.0)
    with pytest.raises(ValueError):
        fit_loglog_slope(t, t ** -0.5, burn_in=1.0)
    with pytest.raises(ValueError):
        fit_loglog_slope(t, t[:50] ** -0.5)


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_degenerate_equals_run():
    t = _tree(topology__rounds=20, seed=23)
    results = sweep(t, {"algorithm.inner.lr": [0.1]})
    assert len(results) == 1
    t2 = _tree(topology__rounds=20, seed=23)
    t2["algorithm"]["inner"]["lr"] = 0.1
    t2["seed"] = derive_seed(23, SWEEP, 0)
    ref = run_experiment(config_from_tree(t2))
    assert results[0].final.objective_gap == ref[-1].objective_gap
    assert results[0].final.round == ref[-1].round


def test_sweep_product_and_sort():
    t = _tree(topology__rounds=15, seed=29)
    results = sweep(t, {"algorithm.inner.lr": [0.01, 0.1],
                        "topology.local_steps": [1, 2, 3]})
    assert len(results) == 6
    assert sorted(r.index for r in results) == list(range(6))
    gaps = [r.final.objective_gap for r in results
            if not r.final.diverged and math.isfinite(r.final.objective_gap)]
    assert gaps == sorted(gaps)
    assert {tuple(r.overrides.values()) for r in results} == {
        (lr, z) for lr in (0.01, 0.1) for z in (1, 2, 3)}


def test_sweep_unknown_key_fails_before_any_run():
    t = _tree(topology__rounds=10 ** 6)  # would take minutes if it ran
    with pytest.raises(ConfigError) as e:
        sweep(t, {"algorithm.inner.learning_rate": [0.1]})
    assert "learning_rate" in str(e.value)


def test_sweep_cap():
    t = _tree(topology__rounds=1)
    with pytest.raises(ConfigError) as e:
        sweep(t, {"seed": list(range(10))}, max_runs=5)
    assert "cap" in str(e.value)


def test_sweep_csv_shape():
    t = _tree(topology__rounds=5, seed=31)
    grid = {"algorithm.inner.lr": [0.05, 0.2]}
    results = sweep(t, grid)
    text = format_sweep_csv(results, list(grid))
    lines = text.splitlines()
    assert lines[0] == ("index,algorithm.inner.lr,round,objective_gap,"
                       "dist_to_truth,running_min_grad_sq,diverged")
    assert len(lines) == 3


def test_load_grid_errors(tmp_path):
    f = tmp_path / "g.yaml"
    f.write_text("[]")
    with pytest.raises(ConfigError):
        load_grid(f)
    f.write_text("lr: []")
    with pytest.raises(ConfigError):
        load_grid(f)
    f.write_text("algorithm.inner.lr: [0.1, 0.2]")
    assert load_grid(f) == {"algorithm.inner.lr": [0.1, 0.2]}
