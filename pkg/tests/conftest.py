#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: tests/conftest.py
测试公共设置: 项目根目录加入 sys.path，常用参数与随机数夹具
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.dynamics import RngStream  # noqa: E402
from core.lattice import ModelParams, SpinConfiguration  # noqa: E402


@pytest.fixture
def params():
    """L=8, h=0.9, β=2 的标准参数"""
    return ModelParams.create(L=8, h=0.9, beta=2.0)


@pytest.fixture
def small_params():
    return ModelParams.create(L=5, h=0.9, beta=3.0)


@pytest.fixture
def rng():
    return RngStream(20240617, stream=7)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_configuration(np_rng):
    """随机构型工厂，默认 -1 占多数"""
    def make(lattice, weights=(0.6, 0.3, 0.1)) -> SpinConfiguration:
        spins = np_rng.choice([-1, 0, 1], size=lattice.size, p=list(weights))
        return SpinConfiguration.from_spins(lattice, spins.tolist())
    return make
