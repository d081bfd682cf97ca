#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: tests/test_trace.py
M 上的迹、经验跳跃速率与区间估计
"""

import math

import pytest

from core.dynamics import StopCondition, run_until
from core.lattice import ModelError, ModelParams, SpinConfiguration
from core.potential import enumerate_closure, trace_rates
from core.statistics import (
    chi_square_uniformity, garwood_interval, mean_interval, poisson_rate_interval, wilson_interval,
)
from core.trace import (
    CSV_COLUMNS, ProjectionLabel, TraceResult, empirical_jump_rates, merge_estimates,
    project_psi, rate_table_csv, sample_jump_chain, time_fraction_outside, trace_from_segments,
    trace_on_M,
)

MINUS, ZERO, PLUS = ProjectionLabel.MINUS, ProjectionLabel.ZERO, ProjectionLabel.PLUS

SEGMENTS = [(-1, 1.0), (None, 0.5), (-1, 2.0), (None, 0.2), (0, 1.0)]


def test_trace_merges_repeated_visits():
    trace = trace_from_segments(SEGMENTS)
    assert trace.visits == [(MINUS, 3.0), (ZERO, 1.0)]
    assert trace.total_time == pytest.approx(4.7)
    assert trace.outside_time == pytest.approx(0.7)
    assert list(trace.transitions()) == [(MINUS, ZERO)]
    assert trace.time_change.inverse(3.5) == pytest.approx(4.2)


def test_compact_visits_rebuild():
    trace = trace_from_segments(SEGMENTS)
    rebuilt = TraceResult.from_visits(trace.compact(), trace.total_time, trace.outside_time)
    assert rebuilt.visits == trace.visits
    assert rebuilt.time_change.occupied_time == pytest.approx(4.0)


def test_projection_labels(small_params):
    lattice = small_params.lattice
    assert project_psi(SpinConfiguration.uniform(lattice, 1)) is PLUS
    assert project_psi(SpinConfiguration.from_sites(lattice, [0])) is ProjectionLabel.DELTA
    assert not ProjectionLabel.DELTA.in_M


def test_empirical_rates_from_counts():
    traces = [trace_from_segments(SEGMENTS), trace_from_segments([(-1, 2.0), (0, 4.0), (1, 1.0)])]
    table = {(e.source, e.target): e for e in empirical_jump_rates(traces, theta_ref=2.0)}
    assert len(table) == 6
    # -1 的停留 3 + 2 = 5，以 θ=2 为单位是 2.5
    assert table[(MINUS, ZERO)].count == 2
    assert table[(MINUS, ZERO)].rate == pytest.approx(2 / 2.5)
    assert table[(ZERO, PLUS)].rate == pytest.approx(1 / 2.5)
    assert table[(ZERO, MINUS)].count == 0
    assert table[(ZERO, MINUS)].ci_lo == 0.0 < table[(ZERO, MINUS)].ci_hi
    assert not table[(PLUS, MINUS)].undefined
    with pytest.raises(ModelError):
        empirical_jump_rates(traces, theta_ref=0.0)


def test_rate_undefined_without_sojourn():
    table = {(e.source, e.target): e for e in empirical_jump_rates([trace_from_segments(SEGMENTS)], 1.0)}
    assert table[(PLUS, ZERO)].undefined
    assert math.isnan(table[(PLUS, ZERO)].rate)


def test_merge_estimates_adds_counts():
    a = empirical_jump_rates([trace_from_segments(SEGMENTS)], 1.0)
    b = empirical_jump_rates([trace_from_segments([(-1, 1.0), (0, 1.0)])], 1.0)
    merged = {(e.source, e.target): e for e in merge_estimates(a, b)}
    assert merged[(MINUS, ZERO)].count == 2
    assert merged[(MINUS, ZERO)].sojourn_over_theta == pytest.approx(4.0)


def test_rates_recovered_from_jump_chain(rng):
    rates = {(-1, 0): 1.0, (0, -1): 0.5, (0, 1): 1.5, (1, 0): 0.25, (-1, 1): 0.1, (1, -1): 0.0}
    path = sample_jump_chain(rates, -1, 4000.0, rng)
    assert sum(d for _, d in path) == pytest.approx(4000.0)
    estimates = empirical_jump_rates([trace_from_segments(path)], theta_ref=1.0)
    names = {MINUS: -1, ZERO: 0, PLUS: 1}
    for e in estimates:
        true = rates.get((names[e.source], names[e.target]), 0.0)
        if true == 0.0:
            assert e.count == 0
            continue
        assert abs(e.rate - true) < 4 * true / math.sqrt(max(e.count, 1))


def test_time_fraction_outside():
    assert time_fraction_outside(SEGMENTS, 2.0) == pytest.approx(0.25)
    assert time_fraction_outside(SEGMENTS, 4.7) == pytest.approx(0.7 / 4.7)
    with pytest.raises(ModelError):
        time_fraction_outside(SEGMENTS, 10.0)
    with pytest.raises(ModelError):
        time_fraction_outside(SEGMENTS, 0.0)


def test_trace_of_simulated_path(rng):
    p = ModelParams.create(L=4, h=0.9, beta=0.8)
    traj = run_until(SpinConfiguration.uniform(p.lattice, -1), StopCondition(time_cap=50.0, event_cap=None),
                     p, rng, record_events=False)
    trace = trace_on_M(traj)
    assert trace.total_time == pytest.approx(traj.total_time)
    assert trace.visits[0][0] is MINUS
    outside = time_fraction_outside(traj, traj.total_time)
    assert outside == pytest.approx(trace.outside_time / trace.total_time)


def test_simulated_trace_rates_match_exact_trace_rates(rng):
    """2×2 环面的完整链 (81 个状态): 迹上的经验跳跃计数与 r_F·停留时间一致"""
    p = ModelParams.create(L=2, h=0.9, beta=0.3)
    keys = {label: SpinConfiguration.uniform(p.lattice, spin).key()
            for label, spin in ((MINUS, -1), (ZERO, 0), (PLUS, 1))}
    chain = enumerate_closure([SpinConfiguration.uniform(p.lattice, -1)], lambda s: True, p)
    assert chain.n_states == 3 ** 4
    exact = trace_rates(chain, list(keys.values()))

    traj = run_until(SpinConfiguration.uniform(p.lattice, -1), StopCondition(time_cap=5000.0, event_cap=None),
                     p, rng, record_events=False)
    estimates = empirical_jump_rates([trace_on_M(traj)], theta_ref=1.0)
    assert sum(e.count for e in estimates) > 30
    for e in estimates:
        # 给定停留时间，计数减去 r·S 是方差为 r·S 的鞅
        expected = exact[(keys[e.source], keys[e.target])] * e.sojourn_over_theta
        assert abs(e.count - expected) <= 4 * math.sqrt(expected) + 1


def test_rate_table_csv():
    text = rate_table_csv(empirical_jump_rates([trace_from_segments(SEGMENTS)], 1.0))
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].startswith("-1,0,1,")
    assert len(lines) == 7


def test_wilson_interval():
    empty = wilson_interval(0, 10)
    assert empty.low == 0.0
    assert empty.high == pytest.approx(0.2775, abs=1e-3)
    half = wilson_interval(50, 100)
    assert half.estimate == 0.5
    assert half.low == pytest.approx(1.0 - half.high)
    assert half.contains(0.5)
    assert math.isnan(wilson_interval(0, 0).estimate)


def test_garwood_interval():
    low, high = garwood_interval(0)
    assert low == 0.0
    assert high == pytest.approx(-math.log(0.025), rel=1e-9)
    rate = poisson_rate_interval(10, 5.0)
    assert rate.estimate == 2.0
    assert rate.low < 2.0 < rate.high
    assert math.isnan(poisson_rate_interval(3, 0.0).estimate)


def test_chi_square_uniformity():
    assert chi_square_uniformity([100, 100, 100]) == pytest.approx(1.0)
    assert chi_square_uniformity([40, 20, 40], weights=[4, 2, 4]) == pytest.approx(1.0)
    assert chi_square_uniformity([300, 0, 0]) < 1e-10


def test_mean_interval():
    interval = mean_interval([1.0, 2.0, 3.0, 4.0])
    assert interval.estimate == 2.5
    assert interval.half_width == pytest.approx(4 * math.sqrt(5.0 / 3.0) / 2.0)
    assert mean_interval([1.0]).high == math.inf
