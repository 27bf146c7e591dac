import csv
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from unified_wf import NoFeasibleMuError, ScenarioTemplate, SweepConfig, emit_csv, emit_plot, parse_csv, run_sweep, summarize
from unified_wf import cli, sweep
from unified_wf.allocation import Allocation
from unified_wf.sweep import CSV_HEADER, SweepResult, emit_summary_csv

SMALL = SweepConfig(snr_db_grid=(0.0, 20.0), p_total_grid=(5.0,), trials=2, base_seed=3)


def test_single_row_sweep():
    cfg = SweepConfig(snr_db_grid=(10.0,), p_total_grid=(1.0,), trials=1, algorithms=("equal",))
    result = run_sweep(cfg)
    assert len(result.rows) == 1
    row = result.rows[0]
    assert row.algorithm == "equal" and row.iterations == 0 and row.qos_rate >= 0


def test_row_count_and_order():
    result = run_sweep(SMALL)
    assert len(result.rows) == 3 * 2 * 2
    keys = [(r.algorithm, r.p_total_w, r.snr_db, r.trial) for r in result.rows]
    order = {"unified": 0, "traditional": 1, "equal": 2}
    assert keys == sorted(keys, key=lambda k: (order[k[0]], k[1], k[2], k[3]))
    assert all(math.isfinite(r.wall_time_s) and r.wall_time_s > 0 for r in result.rows)


def test_k15_setting_end_to_end():
    cfg = SweepConfig(snr_db_grid=(20.0,), p_total_grid=(5.0,), trials=1)
    assert (cfg.template.n_comm, cfg.template.n_sense, cfg.template.n_jrc) == (5, 5, 5)
    result = run_sweep(cfg)
    unified = result.select(algorithm="unified")[0]
    assert 0 < unified.iterations <= cfg.solver.max_iters
    assert all(not r.failed for r in result.rows)


def test_csv_is_byte_identical_without_timing(tmp_path):
    cfg = replace(SMALL, timing=False)
    emit_csv(run_sweep(cfg), tmp_path / "a.csv")
    emit_csv(run_sweep(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert all(r["wall_time_s"] == "nan" for r in rows)


def test_timed_runs_agree_outside_the_timing_column():
    a, b = run_sweep(SMALL), run_sweep(SMALL)
    strip = lambda res: [replace(r, wall_time_s=0.0) for r in res.rows]
    assert strip(a) == strip(b)


def test_parallel_trials_match_serial():
    serial = run_sweep(replace(SMALL, timing=False))
    parallel = run_sweep(replace(SMALL, timing=False, jobs=2))
    assert [repr(r) for r in serial.rows] == [repr(r) for r in parallel.rows]


def test_csv_header_counts_and_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv(SweepResult(rows=[]), path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"

    result = run_sweep(SMALL)
    emit_csv(result, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "algorithm,snr_db,p_total_w,trial,capacity_bps,pd,qos_rate,objective,iterations,wall_time_s"
    assert len(lines) == 12 + 1
    back = parse_csv(tmp_path / "s.csv")
    for a, b in zip(result.rows, back.rows):
        assert a.algorithm == b.algorithm and a.trial == b.trial and a.iterations == b.iterations
        for name in ("snr_db", "p_total_w", "capacity_bps", "pd", "qos_rate", "objective", "wall_time_s"):
            assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-8)
    emit_csv(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "s.csv").read_bytes()


def test_unwritable_csv_path(tmp_path):
    with pytest.raises(OSError):
        emit_csv(SweepResult(rows=[]), tmp_path / "missing" / "x.csv")


def test_bad_header_rejected(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        parse_csv(tmp_path / "x.csv")


def test_infeasible_solver_is_flagged(monkeypatch):
    real = sweep._allocate

    def flaky(name, scenario, solver_cfg):
        if name == "unified":
            raise NoFeasibleMuError("forced")
        return real(name, scenario, solver_cfg)

    monkeypatch.setattr(sweep, "_allocate", flaky)
    result = run_sweep(replace(SMALL, trials=1))
    bad = result.select(algorithm="unified")
    assert bad and all(r.failed and math.isnan(r.capacity_bps) for r in bad)
    assert not any(r.failed for r in result.select(algorithm="equal"))
    summary = summarize(result)
    assert all(e["failed"] == 1 for e in summary if e["algorithm"] == "unified")


def test_budget_audit_catches_overspend(monkeypatch):
    def greedy(name, scenario, solver_cfg):
        return Allocation(scenario.beta * float(scenario.p_total), scenario.beta), 0

    monkeypatch.setattr(sweep, "_allocate", greedy)
    with pytest.raises(AssertionError, match="budget"):
        run_sweep(replace(SMALL, trials=1))


def test_summarize_mean_and_stderr():
    result = run_sweep(SMALL)
    summary = summarize(result)
    assert len(summary) == 3 * 2
    e = next(s for s in summary if s["algorithm"] == "equal" and s["snr_db"] == 20.0)
    vals = [r.capacity_bps for r in result.select(algorithm="equal", snr_db=20.0)]
    assert e["capacity_bps"] == pytest.approx(np.mean(vals))
    assert e["capacity_bps_stderr"] == pytest.approx(np.std(vals, ddof=1) / np.sqrt(2))


def test_summary_csv(tmp_path):
    emit_summary_csv(run_sweep(SMALL), tmp_path / "summary.csv")
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert len(rows) == 6 and "pd_stderr" in rows[0]


def _series_markers(svg_path):
    root = ET.parse(svg_path).getroot()
    groups = [g for g in root.iter() if g.tag.endswith("}g") and g.get("id", "").startswith("series-")]
    return {g.get("id"): sum(1 for el in g.iter() if el.tag.endswith("use")) for g in groups}


@pytest.mark.parametrize("metric", ["capacity", "pd", "qos_rate", "runtime"])
def test_emit_plot_writes_svg(tmp_path, metric):
    result = run_sweep(replace(SMALL, trials=1))
    path = tmp_path / f"{metric}.svg"
    emit_plot(result, metric, path)
    assert ET.parse(path).getroot().tag.endswith("svg")


def test_single_point_plot_has_one_marker_per_series(tmp_path):
    cfg = SweepConfig(snr_db_grid=(10.0,), p_total_grid=(1.0, 5.0), trials=1)
    emit_plot(run_sweep(cfg), "capacity", tmp_path / "c.svg")
    markers = _series_markers(tmp_path / "c.svg")
    assert len(markers) == 3 * 2
    assert set(markers.values()) == {1}


def test_plot_is_deterministic(tmp_path):
    result = run_sweep(replace(SMALL, trials=1, timing=False))
    emit_plot(result, "pd", tmp_path / "a.svg")
    emit_plot(result, "pd", tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_unknown_plot_metric(tmp_path):
    with pytest.raises(ValueError):
        emit_plot(SweepResult(rows=[]), "latency", tmp_path / "x.svg")


# -- configuration -------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(snr_db_grid=()), dict(p_total_grid=()), dict(trials=0),
                                    dict(algorithms=("magic",)), dict(p_total_grid=(0.0,)), dict(jobs=0)])
def test_sweep_config_validation(kwargs):
    with pytest.raises(ValueError):
        SweepConfig(**kwargs)


def test_sweep_config_dict_round_trip(tmp_path):
    cfg = SweepConfig(trials=7, template=ScenarioTemplate(n_comm=2, s_min_db=5.0), timing=False)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SweepConfig.load(path) == cfg
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"trails": 3})


def test_template_qos_targets():
    t = ScenarioTemplate(n_comm=1, n_sense=1, n_jrc=1)
    sc = t.build(seed=0)
    assert sc.c_min.tolist() == [0.5e6, 0.0, 0.5e6]
    assert sc.s_min[0] == 0.0 and sc.s_min[1] == pytest.approx(10 ** 0.3)
    at = t.at(sc, 20.0, 3.0)
    assert at.p_total == 3.0
    assert np.allclose(at.n0, 3.0 / (at.n_sub * 100.0)) and np.allclose(at.c0, at.n0)


# -- command line ----------------------------------------------------------------------

def test_parse_grid():
    assert cli.parse_grid("0:2:20") == [float(x) for x in range(0, 21, 2)]
    assert cli.parse_grid("1,3,5") == [1.0, 3.0, 5.0]
    assert cli.parse_grid("0:0.5:1") == [0.0, 0.5, 1.0]
    for bad in ("0:3:20", "5:1:0", "1:2", ""):
        with pytest.raises(ValueError):
            cli.parse_grid(bad)


def test_cli_sweep_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["--out-dir", str(out), "--snr-db", "0,20", "--p-total", "5", "--trials", "1",
                     "--seed", "9", "--plot", "capacity,runtime", "--no-timing"])
    assert code == 0
    for name in ("sweep.csv", "summary.csv", "config.json", "capacity.svg", "runtime.svg"):
        assert (out / name).exists()
    assert len(parse_csv(out / "sweep.csv").rows) == 6
    saved = SweepConfig.load(out / "config.json")
    assert saved.base_seed == 9 and saved.timing is False
    assert "6 rows" in capsys.readouterr().out


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trials": 1, "snr_db_grid": [10], "p_total_grid": [1],
                               "algorithms": ["equal", "traditional"]}))
    out = tmp_path / "out"
    assert cli.main(["--config", str(cfg), "--algorithms", "equal", "--out-dir", str(out)]) == 0
    rows = parse_csv(out / "sweep.csv").rows
    assert [r.algorithm for r in rows] == ["equal"]


@pytest.mark.parametrize("argv", [["--config", "/nonexistent.json"], ["--algorithms", "bogus"],
                                  ["--snr-db", "a:b:c"], ["--plot", "latency"], ["--trials", "0"]])
def test_cli_config_errors(argv, tmp_path):
    assert cli.main(argv + ["--out-dir", str(tmp_path)]) == 2


def test_cli_malformed_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["--config", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_cli_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = cli.main(["--out-dir", str(blocker / "sub"), "--trials", "1", "--snr-db", "10",
                     "--p-total", "1", "--algorithms", "equal"])
    assert code == 2


def test_cli_scenario_and_solve(tmp_path):
    scen = tmp_path / "s.json"
    assert cli.main(["scenario", str(scen), "--seed", "1", "--snr-db", "10"]) == 0
    code = cli.main(["solve", str(scen), "--report", str(tmp_path / "r.json"), "--trace", str(tmp_path / "t.csv")])
    assert code == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["converged"] and report["iterations"] > 0
    assert (tmp_path / "t.csv").read_text().startswith("iter,objective,power_delta,kkt_residual\n")
    assert cli.main(["solve", str(tmp_path / "missing.json")]) == 2


def test_fixed_snr_baselines_do_not_depend_on_budget():
    # SNR = P_total / (N N0) ties N0 to the budget, so interference-blind allocations are scale free
    cfg = SweepConfig(snr_db_grid=(10.0,), p_total_grid=(1.0, 5.0), trials=2, timing=False)
    result = run_sweep(cfg)
    for alg in ("traditional", "equal"):
        small = result.select(algorithm=alg, p_total_w=1.0)
        large = result.select(algorithm=alg, p_total_w=5.0)
        for a, b in zip(small, large):
            assert b.capacity_bps == pytest.approx(a.capacity_bps, rel=1e-9)
            assert b.pd == pytest.approx(a.pd, rel=1e-9)
            assert b.qos_rate == a.qos_rate
    # the sensing update is not homogeneous in the noise scale, so the unified curves do move
    u1 = [r.capacity_bps for r in result.select(algorithm="unified", p_total_w=1.0)]
    u5 = [r.capacity_bps for r in result.select(algorithm="unified", p_total_w=5.0)]
    assert u1 != u5
