#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/statistics.py
区间估计与检验 - Wilson 比例区间、Garwood 泊松区间、卡方均匀性检验
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Interval:
    estimate: float
    low: float
    high: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.high - self.low)

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Interval:
    """二项比例的 Wilson 得分区间"""
    if trials <= 0:
        return Interval(math.nan, 0.0, 1.0)
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    phat = successes / trials
    denominator = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denominator
    spread = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denominator
    return Interval(phat, max(0.0, centre - spread), min(1.0, centre + spread))


def garwood_interval(count: int, confidence: float = 0.95) -> Tuple[float, float]:
    """泊松计数的精确 (Garwood) 区间"""
    alpha = 1.0 - confidence
    low = 0.0 if count == 0 else 0.5 * stats.chi2.ppf(alpha / 2.0, 2 * count)
    high = 0.5 * stats.chi2.ppf(1.0 - alpha / 2.0, 2 * count + 2)
    return float(low), float(high)


def poisson_rate_interval(count: int, exposure: float, confidence: float = 0.95) -> Interval:
    """速率 = count / exposure 及其 Garwood 区间"""
    if not exposure > 0.0:
        return Interval(math.nan, math.nan, math.nan)
    low, high = garwood_interval(count, confidence)
    return Interval(count / exposure, low / exposure, high / exposure)


def chi_square_uniformity(counts: Sequence[int], weights: Optional[Sequence[float]] = None) -> float:
    """
    计数服从均匀分布的卡方检验 p 值

    weights 给出各格的相对权重 (例如每类所含的等概率位置数)。
    """
    observed = np.asarray(counts, dtype=float)
    if weights is None:
        return float(stats.chisquare(observed).pvalue)
    w = np.asarray(weights, dtype=float)
    expected = w / w.sum() * observed.sum()
    return float(stats.chisquare(observed, f_exp=expected).pvalue)


def mean_interval(samples: Sequence[float], sigmas: float = 4.0) -> Interval:
    """样本均值 ± sigmas 个标准误"""
    data = np.asarray(samples, dtype=float)
    mean = float(data.mean())
    if data.size < 2:
        return Interval(mean, -math.inf, math.inf)
    error = float(data.std(ddof=1)) / math.sqrt(data.size)
    return Interval(mean, mean - sigmas * error, mean + sigmas * error)
