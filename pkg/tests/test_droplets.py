#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: tests/test_droplets.py
临界液滴分类、谷的成员判定、贴附位置计数与渐近尺度
"""

import math

import pytest

from core.droplets import (
    ClassLabel, average_zero_first, boundary_Bplus, classify, critical_side, critical_size,
    enumerate_Ra, exit_slot_weights, gamma_c, in_R, in_Ra, in_Rl, in_Rl0, in_valley_minus,
    in_valley_zero, is_stable, make_rectangle, make_spiral, rectangle_sites, regime_report,
    spiral_offsets,
)
from core.lattice import (
    ModelError, ModelParams, SpinConfiguration, connected_components, energy, spin_shift,
)
from scenarios.mc_scenarios import DropletFateScenario


@pytest.fixture
def p7():
    return ModelParams.create(L=7, h=0.9, beta=3.0)


def test_critical_side_and_size():
    assert critical_side(0.9) == 2
    assert critical_side(0.3) == 6
    assert critical_size(2) == 6
    with pytest.raises(ModelError):
        critical_side(0.5)


def test_gamma_c_matches_energy_of_attached_droplet(small_params):
    absolute, relative = gamma_c(small_params)
    assert relative == pytest.approx(12 - 0.9 * 7)
    sigma = make_rectangle(small_params, 0, 2, 3, protuberance=("right", 1))
    assert energy(sigma, small_params) == pytest.approx(absolute)
    minus = SpinConfiguration.uniform(small_params.lattice, -1)
    assert absolute - energy(minus, small_params) == pytest.approx(relative)


def test_gamma_c_requires_theorem_regime():
    with pytest.raises(ModelError):
        gamma_c(ModelParams.create(L=5, h=1.3, beta=1.0))


@pytest.mark.parametrize("label", ["Ra_lc", "Ra_li", "Ra_s"])
def test_fate_representatives_have_their_subclass(p7, label):
    sigma = DropletFateScenario.representative(p7, label)
    result = classify(sigma, p7)
    assert result.label.value == label
    assert result.background == -1
    assert boundary_Bplus(sigma, p7)
    assert not is_stable(sigma, p7)


def test_rectangle_is_stable_R(p7):
    for w, hgt in ((2, 3), (3, 2)):
        sigma = make_rectangle(p7, p7.lattice.site(2, 2), w, hgt)
        result = classify(sigma, p7)
        assert result.label is ClassLabel.R
        assert (result.width, result.height) == (w, hgt)
        assert in_R(sigma, p7)
        assert in_valley_minus(sigma, p7)
        assert not boundary_Bplus(sigma, p7)
        assert is_stable(sigma, p7)


def test_plus_protuberance_is_Rplus(p7):
    sigma = make_rectangle(p7, 0, 3, 2, protuberance=("top", 1))
    extra = p7.lattice.site(1, 2)
    sigma.flip(extra, 1)
    assert sigma.spin(extra) == 1
    assert classify(sigma, p7).label is ClassLabel.RPLUS
    assert boundary_Bplus(sigma, p7)
    assert not in_Ra(sigma, p7)


def test_other_shapes(p7):
    lattice = p7.lattice
    # 6 个 0 排成一行，不是 n₀×(n₀+1) 矩形
    line = SpinConfiguration.from_sites(lattice, [lattice.site(x, 3) for x in range(5)] + [lattice.site(0, 4)])
    assert classify(line, p7).label is ClassLabel.B
    assert boundary_Bplus(line, p7)

    seven = SpinConfiguration.from_sites(lattice, [lattice.site(x, 3) for x in range(5)]
                                         + [lattice.site(0, 4), lattice.site(0, 5)])
    assert classify(seven, p7).label is ClassLabel.OTHER
    assert not in_valley_minus(seven, p7)
    assert not boundary_Bplus(seven, p7)


def test_ground_states(p7):
    lattice = p7.lattice
    for spin, label in ((-1, ClassLabel.MINUS_ONE), (0, ClassLabel.ZERO), (1, ClassLabel.PLUS_ONE)):
        sigma = SpinConfiguration.uniform(lattice, spin)
        assert classify(sigma, p7).label is label
        assert is_stable(sigma, p7)
    assert in_valley_minus(SpinConfiguration.uniform(lattice, -1), p7)
    assert in_valley_zero(SpinConfiguration.uniform(lattice, 0), p7)
    assert not in_valley_zero(SpinConfiguration.uniform(lattice, -1), p7)


def test_zero_background_classes(p7):
    sigma = DropletFateScenario.representative(p7, "Ra_li")
    lifted = spin_shift(sigma, 1)
    result = classify(lifted, p7)
    assert result.background == 0
    assert result.token == "Ra_li_0"
    assert in_Rl0(lifted, p7)
    assert not in_Rl(lifted, p7)
    assert in_Rl(sigma, p7)
    assert in_valley_zero(lifted, p7)


def test_spiral_ends_attached(p7):
    n0 = p7.n0
    assert len(spiral_offsets(n0)) == critical_size(n0) + 1
    rect = make_spiral(p7, 0, critical_size(n0))
    assert classify(rect, p7).label is ClassLabel.R
    last = make_spiral(p7, 0, critical_size(n0) + 1)
    assert classify(last, p7).label.attached
    for k in range(1, critical_size(n0) + 1):
        assert in_valley_minus(make_spiral(p7, 0, k), p7)
    with pytest.raises(ModelError):
        make_spiral(p7, 0, critical_size(n0) + 2)


@pytest.mark.slow
def test_Ra_count_and_classification(p7):
    n0 = p7.n0
    keys = set()
    per_label = {}
    for label, sigma in enumerate_Ra(p7):
        keys.add(sigma.key())
        per_label[label] = per_label.get(label, 0) + 1
        assert classify(sigma, p7).label is label
    assert len(keys) == 4 * (2 * n0 + 1) * p7.volume == 980
    rectangles = 2 * p7.volume
    for label, weights in exit_slot_weights(n0).items():
        assert per_label[label] == weights.slots * rectangles


@pytest.mark.parametrize("n0", [2, 3, 4, 7])
def test_average_zero_first_is_one_third(n0):
    weights = exit_slot_weights(n0)
    assert sum(w.slots for w in weights.values()) == 2 * (2 * n0 + 1)
    assert average_zero_first(n0) == pytest.approx(1.0 / 3.0)
    for w in weights.values():
        assert w.minus_first + w.zero_first == pytest.approx(1.0)


def test_component_energy_bound(p7, np_rng):
    """{-1,0} 构型、N = n₀(n₀+1)、k 个连通分支且不属于 R 时，ℍ(σ) ≥ Γ_c + 2(k-1) + h"""
    lattice = p7.lattice
    size = critical_size(p7.n0)
    absolute, _ = gamma_c(p7)
    checked = 0
    for trial in range(600):
        if trial % 2:
            sites = np_rng.choice(lattice.size, size=size, replace=False).tolist()
        else:
            # 随机生长的连通团
            sites = [int(np_rng.integers(lattice.size))]
            while len(sites) < size:
                grow = int(np_rng.choice(sites))
                neighbor = lattice.neighbors[grow][int(np_rng.integers(4))]
                if neighbor not in sites:
                    sites.append(neighbor)
        sigma = SpinConfiguration.from_sites(lattice, sites)
        if in_R(sigma, p7):
            continue
        k = len(connected_components(sigma))
        assert energy(sigma, p7) >= absolute + 2 * (k - 1) + p7.h - 1e-9
        checked += 1
    assert checked > 500


def test_regime_torus_condition_satisfied():
    report = regime_report(ModelParams.create(L=16, h=0.9, beta=10.0))
    assert report.torus_condition.value == pytest.approx(256 * math.exp(-20.0), rel=1e-12)
    assert report.torus_condition.value == pytest.approx(5.3e-7, rel=0.01)
    assert report.satisfied["torus_condition"]


def test_regime_growth_condition_violated_at_desk_scale():
    report = regime_report(ModelParams.create(L=16, h=0.9, beta=4.0))
    assert report.growth_condition_b.value == pytest.approx(65536 * math.exp(-4.4), rel=1e-12)
    assert not report.satisfied["growth_condition_b"]
    assert not report.all_satisfied
    names = [row[0] for row in report.rows()]
    assert names[:3] == list(report.CONDITIONS)
    assert all(row[3] is None for row in report.rows()[3:])


def test_regime_scales_decrease_in_beta():
    low = regime_report(ModelParams.create(L=8, h=0.9, beta=4.0))
    high = regime_report(ModelParams.create(L=8, h=0.9, beta=8.0))
    for name in low.CONDITIONS + low.SCALES:
        assert getattr(high, name).log < getattr(low, name).log
    with pytest.raises(ModelError):
        regime_report(ModelParams.create(L=8, h=0.9, beta=4.0), n=0)


def _expected_label(lattice, rect, w, hgt, extra):
    """逐格查找与 extra 相邻的矩形格点，按所贴边的长度与位置给出子类"""
    for index, site in enumerate(rect):
        i, j = index % w, index // w
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if lattice.shift(site, dx, dy) != extra:
                continue
            length, position = (hgt, j) if dx else (w, i)
            if length < max(w, hgt):
                return ClassLabel.RA_S
            return ClassLabel.RA_LC if position in (0, length - 1) else ClassLabel.RA_LI
    return ClassLabel.RPLUS


def test_classifier_exhaustive_on_small_torus():
    """L=6: 每个矩形本身以及加上任一外部 0 格点后的全部构型"""
    p = ModelParams.create(L=6, h=0.9, beta=2.0)
    lattice = p.lattice
    checked = 0
    for w, hgt in ((2, 3), (3, 2)):
        for anchor in range(lattice.size):
            rect = rectangle_sites(lattice, anchor, w, hgt)
            result = classify(SpinConfiguration.from_sites(lattice, rect), p)
            assert result.label is ClassLabel.R
            assert (result.anchor, result.width, result.height) == (anchor, w, hgt)
            checked += 1
            for extra in set(range(lattice.size)) - set(rect):
                result = classify(SpinConfiguration.from_sites(lattice, rect + [extra]), p)
                assert result.label is _expected_label(lattice, rect, w, hgt, extra)
                assert (result.anchor, result.protuberance) == (anchor, extra)
                checked += 1
    assert checked == 72 * 31


def test_non_rectangular_critical_size_pays_h(p7, np_rng):
    """N = n₀(n₀+1) 且不属于 R 的 {-1,0,+1} 构型: ℍ(σ) ≥ Γ_c + h"""
    lattice = p7.lattice
    size = critical_size(p7.n0)
    absolute, _ = gamma_c(p7)
    checked = 0
    for _ in range(500):
        sites = [int(np_rng.integers(lattice.size))]
        while len(sites) < size:
            neighbor = lattice.neighbors[int(np_rng.choice(sites))][int(np_rng.integers(4))]
            if neighbor not in sites:
                sites.append(neighbor)
        sigma = SpinConfiguration.from_sites(lattice, sites)
        for site in sites:
            if np_rng.random() < 0.3:
                sigma.flip(site, 1)
        if in_R(sigma, p7):
            continue
        assert energy(sigma, p7) >= absolute + p7.h - 1e-9
        checked += 1
    assert checked > 400


def test_detached_or_plus_extra_pays_two(p7):
    """R⁺ \\ Rᵃ: 矩形加一个不贴边的 0 或任一处的 +1，ℍ ≥ Γ_c + 2"""
    lattice = p7.lattice
    absolute, _ = gamma_c(p7)
    attached = {sigma.key() for _, sigma in enumerate_Ra(p7)}
    lowest = math.inf
    for w, hgt in ((2, 3), (3, 2)):
        for anchor in range(lattice.size):
            rect = rectangle_sites(lattice, anchor, w, hgt)
            for extra in set(range(lattice.size)) - set(rect):
                for spin in (0, 1):
                    sigma = SpinConfiguration.from_sites(lattice, rect + [extra])
                    if spin == 1:
                        sigma.flip(extra, 1)
                    elif sigma.key() in attached:
                        continue
                    assert classify(sigma, p7).label is ClassLabel.RPLUS
                    assert boundary_Bplus(sigma, p7)
                    lowest = min(lowest, energy(sigma, p7))
    assert lowest >= absolute + 2 - 1e-9
    assert lowest == pytest.approx(absolute + 2)


def test_two_plus_spins_leave_the_valley(p7, np_rng):
    lattice = p7.lattice
    size = critical_size(p7.n0)
    for _ in range(200):
        sites = np_rng.choice(lattice.size, size=size + 1, replace=False).tolist()
        sigma = SpinConfiguration.from_sites(lattice, sites)
        k = int(np_rng.integers(2, size + 2))
        for site in sites[:k]:
            sigma.flip(site, 1)
        assert sigma.counts[2] >= 2
        assert not in_valley_minus(sigma, p7)
        assert not boundary_Bplus(sigma, p7)
    sigma = DropletFateScenario.representative(p7, "Ra_lc")
    for site in [s for s in range(lattice.size) if sigma.spin(s) == 0][:2]:
        sigma.flip(site, 1)
    assert not in_valley_minus(sigma, p7)


def test_zero_background_duality_over_Ra(p7):
    for label, sigma in enumerate_Ra(p7):
        lifted = spin_shift(sigma, 1)
        result = classify(lifted, p7)
        assert result.label is label
        assert result.background == 0
        assert in_valley_zero(lifted, p7)
        assert in_Rl0(lifted, p7) == (label in (ClassLabel.RA_LC, ClassLabel.RA_LI))
        assert not in_Ra(lifted, p7)
