#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: tests/test_config_loader.py
实验配置、配置文件解析与覆盖顺序
"""

import pytest

from core.config_loader import (
    THREADS_ENV, ConfigError, ConfigLoader, ExperimentConfig, build_config, coerce_value,
    threads_from_env,
)


def test_defaults_and_lists():
    cfg = ExperimentConfig(scenario="route")
    assert cfg.beta_list == [4.5]
    assert cfg.size_list == [8]
    assert cfg.params().n0 == 2
    cfg.validate(["route"])


def test_config_hash_ignores_output_settings():
    a = ExperimentConfig(scenario="route", out="x", threads=4)
    b = ExperimentConfig(scenario="route", out="y", threads=1, check=True)
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    assert a.config_hash() != ExperimentConfig(scenario="route", seed=1).config_hash()


def test_merge_coerces_strings():
    cfg = ExperimentConfig().merge({"betas": "3.5, 4", "sizes": "8 16", "replicas": "20",
                                    "time_cap": "none", "check": "yes", "L": None})
    assert cfg.betas == [3.5, 4.0]
    assert cfg.sizes == [8, 16]
    assert cfg.replicas == 20
    assert cfg.time_cap is None
    assert cfg.check is True
    assert cfg.L == 8
    with pytest.raises(ConfigError):
        cfg.merge({"colour": "red"})
    with pytest.raises(ConfigError):
        coerce_value("h", "strong")
    assert coerce_value("event_cap", "1e6") == 1_000_000


@pytest.mark.parametrize("values", [
    {"replicas": 0},
    {"h": 1.0},
    {"L": 1},
    {"threads": 0},
    {"scenario": "unknown"},
])
def test_validate_rejects(values):
    cfg = ExperimentConfig(scenario="route").merge(values)
    with pytest.raises(ConfigError):
        cfg.validate(["route"])


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# desk run\nscenario = route\nL = 10   # side\nbetas = 3, 4\n\nreplicas = 12\n",
                    encoding="utf-8")
    values = ConfigLoader().load_config_file(path)
    assert values == {"scenario": "route", "L": 10, "betas": [3.0, 4.0], "replicas": 12}


@pytest.mark.parametrize("text", ["L 10\n", "colour = red\n", "L = ten\n"])
def test_config_file_errors(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        ConfigLoader().load_config_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ConfigLoader().load_config_file(tmp_path / "absent.cfg")


def test_read_snapshot(tmp_path):
    path = tmp_path / "state.txt"
    path.write_text("\n5 0.9 24m1z\n", encoding="utf-8")
    sigma, h = ConfigLoader().read_snapshot(path)
    assert h == 0.9
    assert sigma.spin(24) == 0


def test_threads_from_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert threads_from_env(3) == 3
    monkeypatch.setenv(THREADS_ENV, "6")
    assert threads_from_env(1) == 6
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        threads_from_env(1)


def test_build_config_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")
    path = tmp_path / "run.cfg"
    path.write_text("replicas = 30\nseed = 5\n", encoding="utf-8")
    preset = {"scenario": "route", "replicas": 100, "L": 12, "seed": 1}
    cfg = build_config(preset=preset, config_path=path, overrides={"seed": 9, "L": None})
    assert (cfg.scenario, cfg.L, cfg.replicas, cfg.seed, cfg.threads) == ("route", 12, 30, 9, 2)
