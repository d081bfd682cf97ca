#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: tests/test_experiments.py
实验引擎、场景、结果文件与命令行入口
"""

import json
import math

import pytest

import main as cli
from core.config_loader import THREADS_ENV, ConfigError, ExperimentConfig
from core.experiment_engine import ExperimentEngine
from core.report_generator import SUMMARY_COLUMNS, ReportGenerator, format_float
from scenarios.base_scenario import (
    BaseScenario, ExperimentError, RunRecord, ScenarioResult, SummaryRow, reference_beta,
)

SCENARIOS = {"nucleation-gate", "route", "trace-limit", "droplet-fate",
             "capacity-exact", "eigen-bound", "regime-scan"}


@pytest.fixture(scope="module")
def engine():
    return ExperimentEngine()


@pytest.fixture(autouse=True)
def single_process(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


def _record(replica, hit_label="-1"):
    return RunRecord(replica=replica, seed=1, stream=replica, beta=2.0, phase="p",
                     stop_reason="target", hit_label=hit_label, hitting_time=1.0, event_count=3)


def test_registry_and_presets(engine):
    assert set(engine.scenario_names) == SCENARIOS
    assert engine.validate_scenarios() == []
    presets = {entry["key"]: entry for entry in engine.list_entries()["presets"]}
    assert presets["desk-route"]["scenario"] == "route"
    assert engine.apply_template("desk-regime")["sizes"] == [8, 16, 32]
    with pytest.raises(ConfigError):
        engine.apply_template("no-such-preset")
    with pytest.raises(ConfigError):
        engine.get_scenario("no-such-scenario")


def test_config_export_import(engine, tmp_path):
    cfg = ExperimentConfig(scenario="route", betas=[3.5, 4.0], replicas=7)
    path = tmp_path / "cfg" / "route.json"
    engine.export_config(cfg, path)
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["config_hash"] == cfg.config_hash()
    loaded = engine.import_config(path)
    assert loaded == cfg
    with pytest.raises(ConfigError):
        engine.import_config(tmp_path / "missing.json")


def test_prepare_checks_theorem_regime(engine):
    with pytest.raises(ExperimentError):
        engine.prepare(ExperimentConfig(scenario="route", h=1.3))
    assert engine.prepare(ExperimentConfig(scenario="regime-scan", h=1.3)).name == "regime-scan"


def test_stream_ids_are_disjoint():
    assert BaseScenario.stream_id(1, 2, 3) == 10_000_003
    ids = {BaseScenario.stream_id(b, ph, r) for b in range(3) for ph in range(3) for r in range(50)}
    assert len(ids) == 450


def test_cap_policy():
    records = [_record(i) for i in range(100)]
    records[5] = _record(5, "cap")
    assert len(BaseScenario.screen_capped(records)) == 99
    records[6] = _record(6, "cap")
    records[7] = _record(7, "cap")
    with pytest.raises(ExperimentError):
        BaseScenario.screen_capped(records)


def test_trend_rows_allow_interval_slack():
    rows = [SummaryRow("f", 4.0, 0.70, 0.60, 0.80), SummaryRow("f", 3.0, 0.50, 0.45, 0.55),
            SummaryRow("f", 5.0, 0.66, 0.62, 0.70)]
    trend = BaseScenario.trend_rows("f", rows)
    assert [r.beta for r in trend] == [4.0, 5.0]
    assert all(r.passed for r in trend)
    worse = BaseScenario.trend_rows("f", [SummaryRow("f", 3.0, 0.9, 0.89, 0.91),
                                          SummaryRow("f", 4.0, 0.5, 0.49, 0.51)])
    assert worse[0].passed is False


def test_reference_beta():
    assert reference_beta(ExperimentConfig(beta=4.0, betas=[3.5, 4.0, 4.5])) == 4.0
    assert reference_beta(ExperimentConfig(beta=9.0, betas=[3.5, 4.0])) == 4.0
    assert reference_beta(ExperimentConfig(beta=4.5)) == 4.5


def test_eigen_bound_scenario(engine):
    result = engine.run(ExperimentConfig(scenario="eigen-bound"))
    assert len(result.rows) == 6 * 4 * 2 + 4 * 2
    assert result.check_passed


def test_regime_scan_scenario(engine):
    result = engine.run(ExperimentConfig(scenario="regime-scan", sizes=[16], betas=[10.0, 4.0]))
    assert len(result.regimes) == 2
    torus = [r for r in result.rows if r.metric == "torus_condition"]
    assert [r.beta for r in torus] == [4.0, 10.0]
    assert torus[1].value == pytest.approx(5.3e-7, rel=0.01)
    assert all(r.passed is None for r in torus)
    assert torus[1].holds is True
    growth = {r.beta: r for r in result.rows if r.metric == "growth_condition_b"}
    assert growth[4.0].holds is False
    assert result.check_passed
    regime_lines = ReportGenerator().regime_lines(result)
    assert len(regime_lines) == 2 * 12

    csv_lines = ReportGenerator().summary_csv(result).splitlines()
    assert csv_lines[0].endswith("passed,holds")
    growth_line = next(line for line in csv_lines if ",growth_condition_b," in line and ",4," in line)
    assert growth_line.endswith(",,no")


def _fate_config(tmp_path, **values):
    base = dict(scenario="droplet-fate", L=5, h=0.9, beta=2.0, replicas=6,
                seed=7, event_cap=10 ** 6, out=str(tmp_path))
    base.update(values)
    return ExperimentConfig(**base)


def test_monte_carlo_run_is_reproducible(engine, tmp_path):
    cfg = _fate_config(tmp_path)
    first = engine.run(cfg)
    second = engine.run(cfg)
    reporter = ReportGenerator(tmp_path)
    assert reporter.summary_csv(first) == reporter.summary_csv(second)
    assert [r.replica for r in first.records] == list(range(6)) * 3
    assert len({r.stream for r in first.records}) == 18
    assert {r.hit_label for r in first.records} <= {"-1", "0", "+1"}

    paths = reporter.write_all(first)
    for name in ("runs", "summary", "regime", "html", "text"):
        assert paths[name].exists()
    runs = paths["runs"].read_text(encoding="utf-8").splitlines()
    assert len(runs) == 18
    assert json.loads(runs[0])["phase"] == "Ra_lc"
    header = paths["summary"].read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(SUMMARY_COLUMNS)


def test_worker_count_does_not_change_results(engine, tmp_path):
    serial = engine.run(_fate_config(tmp_path, replicas=4))
    parallel = engine.run(_fate_config(tmp_path, replicas=4, threads=2))
    reporter = ReportGenerator(tmp_path)
    assert reporter.summary_csv(serial) == reporter.summary_csv(parallel)


def _metrics(result):
    return {row.metric for row in result.rows}


def test_route_scenario_small_lattice(engine):
    cfg = ExperimentConfig(scenario="route", L=5, h=0.9, beta=1.5, replicas=4, seed=3,
                           event_cap=10 ** 6)
    result = engine.run(cfg)
    assert [r.phase for r in result.records] == ["minus"] * 4 + ["zero"] * 4
    assert {r.hit_label for r in result.records if r.phase == "minus"} <= {"0", "+1"}
    assert {r.hit_label for r in result.records if r.phase == "zero"} <= {"+1", "-1"}
    assert {"zero_before_plus", "plus_before_minus_from_zero", "capped_minus"} <= _metrics(result)


def test_nucleation_gate_scenario_small_lattice(engine):
    cfg = ExperimentConfig(scenario="nucleation-gate", L=5, h=0.9, beta=1.5, replicas=3, seed=11,
                           event_cap=10 ** 6)
    result = engine.run(cfg)
    assert len(result.records) == 3
    for record in result.records:
        assert record.hit_label == "Bplus"
        assert record.exit_class
        assert record.extra["continuation"] in ("-1", "0", "+1")
    assert {"ra_fraction", "rl_before_growth", "returned_to_minus"} <= _metrics(result)


def test_trace_limit_scenario_small_lattice(engine):
    cfg = ExperimentConfig(scenario="trace-limit", L=5, h=0.9, beta=1.5, replicas=3, seed=5,
                           event_cap=10 ** 6)
    result = engine.run(cfg)
    assert all(r.hit_label == "+1" for r in result.records)
    assert all(0.0 <= r.extra["fraction_outside"] <= 1.0 for r in result.records)
    assert "trace_beta1.5.csv" in result.tables
    assert {"theta_ref", "median_fraction_outside", "visited_zero"} <= _metrics(result)


def test_capped_replicas_abort_the_run(engine, tmp_path):
    with pytest.raises(ExperimentError):
        engine.run(_fate_config(tmp_path, replicas=3, event_cap=1))


@pytest.mark.slow
def test_capacity_exact_scenario(engine):
    result = engine.run(ExperimentConfig(scenario="capacity-exact", L=5, betas=[4.0, 5.0], beta=5.0))
    sandwich = [r for r in result.rows if r.metric == "sandwich"]
    assert len(sandwich) == 2 and all(r.passed for r in sandwich)
    mass = [r.value for r in result.rows if r.metric == "exit_mass_on_Ra"]
    assert mass[1] > mass[0]


def test_format_float():
    assert format_float(None) == ""
    assert format_float(math.nan) == ""
    assert format_float(1.0 / 3.0) == "0.3333333333"


def test_text_report_lists_failures(tmp_path):
    result = ScenarioResult("route", ExperimentConfig(scenario="route"))
    result.rows.append(SummaryRow("zero_before_plus", 4.5, 0.4, 0.3, 0.5, ">= 0.6", False))
    text = ReportGenerator(tmp_path).generate_text_report(result).read_text(encoding="utf-8")
    assert "zero_before_plus" in text
    assert "1 项未通过" in text


def test_cli_list_and_usage(capsys):
    assert cli.main(["--list"]) == cli.EXIT_OK
    assert "regime-scan" in capsys.readouterr().out
    assert cli.main([]) == cli.EXIT_FAULT


def test_cli_dry_run(tmp_path):
    assert cli.main(["route", "--dry-run", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert cli.main(["route", "--h", "1.3", "--dry-run"]) == cli.EXIT_FAULT
    assert cli.main(["--preset", "desk-route", "--beta", "3.5", "--beta", "4", "--dry-run"]) == cli.EXIT_OK


def test_cli_multiple_betas():
    args = cli.parse_arguments(["route", "--beta", "3.5", "--beta", "4"])
    overrides = cli.cli_overrides(args)
    assert overrides["betas"] == [3.5, 4.0]
    assert overrides["beta"] == 4.0


def test_cli_writes_results(tmp_path):
    out = tmp_path / "eigen"
    assert cli.main(["eigen-bound", "--out", str(out), "--check"]) == cli.EXIT_OK
    assert (out / "summary.csv").exists()


def test_cli_check_failure_exit_code(tmp_path, monkeypatch):
    def failing_run(self, cfg):
        result = ScenarioResult(cfg.scenario, cfg)
        result.rows.append(SummaryRow("forced", None, 1.0, threshold="<= 0", passed=False))
        return result

    monkeypatch.setattr(ExperimentEngine, "run", failing_run)
    args = ["eigen-bound", "--out", str(tmp_path)]
    assert cli.main(args + ["--check"]) == cli.EXIT_CHECK_FAILED
    assert cli.main(args) == cli.EXIT_OK
