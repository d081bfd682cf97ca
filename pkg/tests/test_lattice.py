#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: tests/test_lattice.py
环面、构型、能量与快照格式
"""

import itertools
import math

import pytest

from core.lattice import (
    Direction, EnergyDriftError, ModelError, ModelParams, SpinConfiguration, TorusLattice,
    apply_flip, connected_components, decode_snapshot, delta_energy, encode_snapshot, energy,
    flatten, interface_count, relative_gibbs_weight, run_length_decode, site_statistics,
    spin_histogram, spin_shift, translate, verify_energy,
)


def test_torus_neighbors_wrap():
    lattice = TorusLattice(4)
    assert lattice.neighbors[0] == (1, 3, 4, 12)
    assert len(lattice.pairs) == 2 * lattice.size
    assert lattice.site(-1, 5) == lattice.site(3, 1)


def test_torus_rejects_tiny_side():
    with pytest.raises(ModelError):
        TorusLattice(1)


@pytest.mark.parametrize("h", [1.0, 0.5, 2.0 / 3.0, 0.0, 2.5])
def test_params_reject_bad_field(h):
    with pytest.raises(ModelError):
        ModelParams.create(L=5, h=h, beta=1.0)


def test_params_critical_side():
    assert ModelParams.create(L=5, h=0.9, beta=1.0).n0 == 2
    assert ModelParams.create(L=5, h=0.45, beta=1.0).n0 == 4
    assert not ModelParams.create(L=5, h=1.3, beta=1.0).theorem_regime


def test_energy_of_ground_states(small_params):
    lattice = small_params.lattice
    assert energy(SpinConfiguration.uniform(lattice, -1), small_params) == pytest.approx(22.5)
    assert energy(SpinConfiguration.uniform(lattice, 0), small_params) == pytest.approx(0.0)
    assert energy(SpinConfiguration.uniform(lattice, 1), small_params) == pytest.approx(-22.5)


def test_single_zero_in_minus_sea(small_params):
    lattice = small_params.lattice
    minus = SpinConfiguration.uniform(lattice, -1)
    sigma = SpinConfiguration.from_sites(lattice, [0])
    assert energy(sigma, small_params) == pytest.approx(25.6)
    assert delta_energy(minus, 0, Direction.UP, small_params) == pytest.approx(3.1)
    assert interface_count(sigma, -1, 0) == 4
    assert interface_count(sigma, 0, 1) == 0


def test_flip_is_cyclic(small_params):
    sigma = SpinConfiguration.uniform(small_params.lattice, -1)
    seen = []
    for _ in range(3):
        sigma.flip(3, Direction.UP)
        seen.append(sigma.spin(3))
    assert seen == [0, 1, -1]
    sigma.flip(3, Direction.DOWN)
    assert sigma.spin(3) == 1
    assert spin_histogram(sigma) == {-1: 24, 0: 0, 1: 1}


def test_delta_energy_matches_recomputation(params, random_configuration, np_rng):
    for _ in range(200):
        sigma = random_configuration(params.lattice)
        site = int(np_rng.integers(params.lattice.size))
        direction = Direction.UP if np_rng.random() < 0.5 else Direction.DOWN
        before = energy(sigma, params, use_cache=False)
        after = energy(apply_flip(sigma, site, direction), params, use_cache=False)
        assert delta_energy(sigma, site, direction, params) == pytest.approx(after - before, abs=1e-9)


def test_cached_energy_follows_flips(params, random_configuration, np_rng):
    sigma = random_configuration(params.lattice)
    energy(sigma, params)
    for _ in range(500):
        site = int(np_rng.integers(params.lattice.size))
        sigma = apply_flip(sigma, site, Direction.UP, params)
    assert sigma.cached_energy is not None
    verify_energy(sigma, params)


def test_flip_without_delta_drops_cache(params):
    sigma = SpinConfiguration.uniform(params.lattice, -1)
    energy(sigma, params)
    sigma.flip(0, Direction.UP)
    assert sigma.cached_energy is None


def test_verify_energy_detects_drift(params):
    sigma = SpinConfiguration.uniform(params.lattice, 0)
    sigma.set_cached_energy(1.0, params.h)
    with pytest.raises(EnergyDriftError):
        verify_energy(sigma, params)


def test_construction_errors(small_params):
    lattice = small_params.lattice
    with pytest.raises(ModelError):
        SpinConfiguration(lattice, bytearray(3))
    with pytest.raises(ModelError):
        SpinConfiguration.from_spins(lattice, [2] * lattice.size)


def test_site_statistics_and_components(small_params):
    lattice = small_params.lattice
    sigma = SpinConfiguration.from_sites(lattice, [lattice.site(0, 0), lattice.site(2, 2)])
    sigma.flip(lattice.site(2, 2), Direction.UP)
    stats = site_statistics(sigma)
    assert (stats.N, stats.N1) == (2, 1)
    assert len(connected_components(sigma)) == 2

    wrapped = SpinConfiguration.from_sites(lattice, [lattice.site(0, 0), lattice.site(4, 0)])
    assert len(connected_components(wrapped)) == 1


def test_flatten_and_spin_shift(small_params):
    lattice = small_params.lattice
    plus = SpinConfiguration.uniform(lattice, 1)
    assert flatten(plus) == SpinConfiguration.uniform(lattice, 0)
    assert spin_shift(SpinConfiguration.uniform(lattice, 0), -1) == SpinConfiguration.uniform(lattice, -1)
    with pytest.raises(ModelError):
        spin_shift(plus, 1)
    with pytest.raises(ModelError):
        spin_shift(plus, 2)


def test_translation_invariance(params, random_configuration):
    sigma = random_configuration(params.lattice)
    moved = translate(sigma, 3, -2)
    assert energy(moved, params) == pytest.approx(energy(sigma, params))
    assert translate(sigma, params.lattice.side_length, 0) == sigma


def test_relative_weight(small_params):
    lattice = small_params.lattice
    minus = SpinConfiguration.uniform(lattice, -1)
    single = SpinConfiguration.from_sites(lattice, [7])
    assert relative_gibbs_weight(minus, minus, small_params) == 1.0
    assert relative_gibbs_weight(single, minus, small_params) == pytest.approx(
        math.exp(-small_params.beta * 3.1))


def test_snapshot_format(small_params):
    sigma, h = decode_snapshot("5 0.9 24m1z")
    assert h == 0.9
    assert sigma.spin(24) == 0 and sigma.counts[0] == 24
    assert encode_snapshot(sigma, 0.9) == "5 0.9 24m1z"
    with pytest.raises(ModelError):
        run_length_decode("3x")
    with pytest.raises(ModelError):
        decode_snapshot("5 24m1z")


def _small_droplets(lattice, max_sites):
    """-1 海洋中至多 max_sites 个格点取 0 或 +1 的全部构型"""
    for n in range(max_sites + 1):
        for sites in itertools.combinations(range(lattice.size), n):
            for spins in itertools.product((0, 1), repeat=n):
                codes = bytearray(lattice.size)
                for site, spin in zip(sites, spins):
                    codes[site] = spin + 1
                yield SpinConfiguration(lattice, codes)


@pytest.mark.slow
def test_flattening_and_isoperimetry_exhaustive():
    p = ModelParams.create(L=4, h=0.9, beta=1.0)
    count = 0
    for sigma in _small_droplets(p.lattice, 4):
        flat = flatten(sigma)
        assert energy(flat, p, use_cache=False) <= energy(sigma, p, use_cache=False) + 1e-9
        n_plus = sigma.counts[2]
        if n_plus:
            interfaces = interface_count(sigma, 0, 1) + interface_count(sigma, -1, 1)
            assert interfaces >= 4 * math.sqrt(n_plus) - 1e-9
        count += 1
    assert count == sum(math.comb(16, n) * 2 ** n for n in range(5))


def test_flattening_sampled(np_rng):
    p = ModelParams.create(L=4, h=0.9, beta=1.0)
    lattice = p.lattice
    for _ in range(2000):
        n = int(np_rng.integers(1, 8))
        sites = np_rng.choice(lattice.size, size=n, replace=False).tolist()
        codes = bytearray(lattice.size)
        for site in sites:
            codes[site] = int(np_rng.integers(1, 3))
        sigma = SpinConfiguration(lattice, codes)
        flat = flatten(sigma)
        assert flatten(flat) == flat
        assert energy(flat, p) <= energy(sigma, p) + 1e-9
