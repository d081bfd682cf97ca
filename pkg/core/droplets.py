#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/droplets.py
临界液滴几何 - n₀、Γ_c、构型类别 (M, R, R⁺, Rᵃ 及其子类)、谷与边界、
螺旋路径构造以及渐近尺度计算

0 背景下的类别 (R₀, Rᵃ₀, Rˡ₀) 通过自旋平移复用 -1 背景的实现。
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from core.lattice import (
    INTEGER_TOLERANCE, ModelError, ModelParams, Spin, SpinConfiguration, TorusLattice,
    flip_terms, non_minus_sites, spin_shift,
)

# 条件量小于该阈值时视为满足
REGIME_THRESHOLD = 0.1

SIDES = ("bottom", "top", "left", "right")


class ClassLabel(Enum):
    """构型类别及其输出符号"""
    MINUS_ONE = "M-1"
    ZERO = "M0"
    PLUS_ONE = "M+1"
    R = "R"
    RA_LC = "Ra_lc"
    RA_LI = "Ra_li"
    RA_S = "Ra_s"
    RPLUS = "Rplus"
    B = "B"
    OTHER = "Other"

    @property
    def is_ground(self) -> bool:
        return self in (ClassLabel.MINUS_ONE, ClassLabel.ZERO, ClassLabel.PLUS_ONE)

    @property
    def attached(self) -> bool:
        return self in (ClassLabel.RA_LC, ClassLabel.RA_LI, ClassLabel.RA_S)

    @property
    def in_Rplus(self) -> bool:
        return self.attached or self is ClassLabel.RPLUS


@dataclass(frozen=True)
class DropletClass:
    """
    classify 的结果

    background 为 -1 或 0 (0 背景即自旋平移后的同类构型)；
    含矩形的类别记录矩形左下角、宽、高以及突起格点。
    """
    label: ClassLabel
    background: int = -1
    anchor: Optional[int] = None
    width: Optional[int] = None
    height: Optional[int] = None
    protuberance: Optional[int] = None

    @property
    def token(self) -> str:
        if self.label.is_ground or self.background == -1:
            return self.label.value
        return f"{self.label.value}_0"


def critical_side(h: float) -> int:
    """n₀ = ⌊2/h⌋"""
    if not 0.0 < h < 2.0:
        raise ModelError(f"外场 h 必须位于 (0,2): {h}")
    ratio = 2.0 / h
    if abs(ratio - round(ratio)) < INTEGER_TOLERANCE:
        raise ModelError(f"2/h 不能是整数: h={h}")
    return int(math.floor(ratio))


def critical_size(n0: int) -> int:
    """n₀(n₀+1)，𝔅 中构型的非 -1 格点数"""
    return n0 * (n0 + 1)


def gamma_c(p: ModelParams) -> Tuple[float, float]:
    """
    返回 (Γ_c, a)

    Γ_c = 4(n₀+1) - h[n₀(n₀+1)+1-|Λ|] 为 Rᵃ 中构型的能量，
    a = Γ_c - ℍ(-1) = 4(n₀+1) - h[n₀(n₀+1)+1] 为相对能垒。
    """
    if not p.theorem_regime:
        raise ModelError(f"Γ_c 要求 h<1 (n₀≥2): h={p.h}")
    n0 = p.n0
    relative = 4 * (n0 + 1) - p.h * (critical_size(n0) + 1)
    absolute = relative + p.h * p.volume
    return absolute, relative


# ---------------------------------------------------------------------------
# 构造

def rectangle_sites(lattice: TorusLattice, anchor: int, width: int, height: int) -> List[int]:
    x0, y0 = lattice.coords(anchor)
    return [lattice.site(x0 + i, y0 + j) for j in range(height) for i in range(width)]


def _check_fits(lattice: TorusLattice, width: int, height: int):
    limit = lattice.side_length - 2
    if not (1 <= width <= limit and 1 <= height <= limit):
        raise ModelError(
            f"{width}×{height} 矩形在 L={lattice.side_length} 的环面上会自我缠绕 (边长上限 {limit})")


def protuberance_site(lattice: TorusLattice, anchor: int, width: int, height: int,
                      side: str, offset: int) -> int:
    """矩形某一边外侧第 offset 个位置 (自左向右 / 自下向上计数)"""
    length = width if side in ("bottom", "top") else height
    if not 0 <= offset < length:
        raise ModelError(f"{side} 边的偏移 {offset} 越界 (边长 {length})")
    x0, y0 = lattice.coords(anchor)
    if side == "bottom":
        return lattice.site(x0 + offset, y0 - 1)
    if side == "top":
        return lattice.site(x0 + offset, y0 + height)
    if side == "left":
        return lattice.site(x0 - 1, y0 + offset)
    if side == "right":
        return lattice.site(x0 + width, y0 + offset)
    raise ModelError(f"未知的矩形边: {side!r}")


def make_rectangle(p: ModelParams, anchor: int, w: int, hgt: int,
                   inner: int = Spin.ZERO, outer: int = Spin.MINUS,
                   protuberance: Optional[Tuple[str, int]] = None) -> SpinConfiguration:
    """outer 自旋海洋中以 anchor 为左下角的 w×hgt inner 矩形，可附加一个突起"""
    lattice = p.lattice
    lattice.check_site(anchor)
    if inner == outer:
        raise ModelError("矩形内外自旋必须不同")
    _check_fits(lattice, w, hgt)
    sites = rectangle_sites(lattice, anchor, w, hgt)
    if protuberance is not None:
        side, offset = protuberance
        sites.append(protuberance_site(lattice, anchor, w, hgt, side, offset))
    return SpinConfiguration.from_sites(lattice, sites, inner=inner, outer=outer)


def spiral_offsets(n0: int) -> List[Tuple[int, int]]:
    """
    螺旋序列 u₁,…,u_{n₀(n₀+1)+1}

    正方形从 k×k 长到 (k+1)×(k+1): 先自左向右加一行顶行，再自上向下加右列；
    到 n₀×n₀ 后再加一行得到竖直的 n₀×(n₀+1) 矩形，最后在顶边左端加一个突起。
    """
    if n0 < 1:
        raise ModelError(f"n₀ 必须为正: {n0}")
    offsets = [(1, 1)]
    for k in range(1, n0):
        offsets.extend((x, k + 1) for x in range(1, k + 2))
        offsets.extend((k + 1, y) for y in range(k, 0, -1))
    offsets.extend((x, n0 + 1) for x in range(1, n0 + 1))
    offsets.append((1, n0 + 2))
    return offsets


def make_spiral(p: ModelParams, x: int, k: int) -> SpinConfiguration:
    """ζ_{x,k}: -1 海洋中 A_{x,k} = x + {u₁,…,u_k} 上为 0 自旋"""
    lattice = p.lattice
    lattice.check_site(x)
    offsets = spiral_offsets(p.n0)
    if not 1 <= k <= len(offsets):
        raise ModelError(f"螺旋步数 k 必须位于 [1, {len(offsets)}]: {k}")
    _check_fits(lattice, p.n0, p.n0 + 1)
    sites = [lattice.shift(x, a, b) for a, b in offsets[:k]]
    return SpinConfiguration.from_sites(lattice, sites, inner=0, outer=-1)


# ---------------------------------------------------------------------------
# 分类

def _find_rectangle(lattice: TorusLattice, sites: FrozenSet[int],
                    shapes: Sequence[Tuple[int, int]]) -> Optional[Tuple[int, int, int]]:
    """sites 恰为某个 (非缠绕) 给定形状矩形时返回 (anchor, w, h)"""
    limit = lattice.side_length - 2
    for site in sites:
        left = lattice.shift(site, -1, 0)
        down = lattice.shift(site, 0, -1)
        if left in sites or down in sites:
            continue
        for w, h in shapes:
            if w > limit or h > limit or w * h != len(sites):
                continue
            if all(s in sites for s in rectangle_sites(lattice, site, w, h)):
                return site, w, h
    return None


def _attachment(lattice: TorusLattice, anchor: int, w: int, h: int, site: int) -> Optional[ClassLabel]:
    """site 贴附在矩形边上时返回 Rᵃ 子类"""
    L = lattice.side_length
    x0, y0 = lattice.coords(anchor)
    px, py = lattice.coords(site)
    dx, dy = (px - x0) % L, (py - y0) % L
    if 0 <= dx < w and dy in (h, L - 1):
        along, length = dx, w
    elif 0 <= dy < h and dx in (w, L - 1):
        along, length = dy, h
    else:
        return None
    if length < max(w, h):
        return ClassLabel.RA_S
    if along in (0, length - 1):
        return ClassLabel.RA_LC
    return ClassLabel.RA_LI


def _classify_minus(sigma: SpinConfiguration, n0: int) -> DropletClass:
    """-1 背景下的分类 (σ 不是单色构型)"""
    lattice = sigma.lattice
    N = sigma.counts[1] + sigma.counts[2]
    size = critical_size(n0)
    shapes = ((n0, n0 + 1), (n0 + 1, n0))

    if N == size:
        if sigma.counts[2] == 0:
            found = _find_rectangle(lattice, frozenset(non_minus_sites(sigma)), shapes)
            if found is not None:
                anchor, w, h = found
                return DropletClass(ClassLabel.R, -1, anchor, w, h)
        return DropletClass(ClassLabel.B)

    if N == size + 1:
        occupied = non_minus_sites(sigma)
        codes = sigma.codes
        zeros = frozenset(s for s in occupied if codes[s] == 1)
        plus = [s for s in occupied if codes[s] == 2]
        candidates = plus if plus else list(zeros)
        if len(plus) <= 1:
            for extra in candidates:
                found = _find_rectangle(lattice, zeros - {extra}, shapes)
                if found is None:
                    continue
                anchor, w, h = found
                sub = _attachment(lattice, anchor, w, h, extra) if codes[extra] == 1 else None
                label = sub if sub is not None else ClassLabel.RPLUS
                return DropletClass(label, -1, anchor, w, h, extra)

    return DropletClass(ClassLabel.OTHER)


def classify(sigma: SpinConfiguration, p: ModelParams) -> DropletClass:
    """
    构型类别: 单色基态、R、Rᵃ 三个子类、R⁺\\Rᵃ、𝔅\\R 或 Other

    不含 -1 自旋的非单色构型按 0 背景分类 (先整体减一)。
    """
    size = sigma.lattice.size
    counts = sigma.counts
    if counts[0] == size:
        return DropletClass(ClassLabel.MINUS_ONE)
    if counts[1] == size:
        return DropletClass(ClassLabel.ZERO, 0)
    if counts[2] == size:
        return DropletClass(ClassLabel.PLUS_ONE, 1)
    if counts[0] == 0:
        shifted = _classify_minus(spin_shift(sigma, -1), p.n0)
        return DropletClass(shifted.label, 0, shifted.anchor, shifted.width,
                            shifted.height, shifted.protuberance)
    return _classify_minus(sigma, p.n0)


def in_valley_minus(sigma: SpinConfiguration, p: ModelParams) -> bool:
    """V₋₁ = {N(σ) ≤ n₀(n₀+1)} ∪ R⁺"""
    N = sigma.counts[1] + sigma.counts[2]
    size = critical_size(p.n0)
    if N <= size:
        return True
    if N > size + 1:
        return False
    return _classify_minus(sigma, p.n0).label.in_Rplus


def boundary_Bplus(sigma: SpinConfiguration, p: ModelParams) -> bool:
    """𝔅⁺ = (𝔅 \\ R) ∪ R⁺"""
    N = sigma.counts[1] + sigma.counts[2]
    size = critical_size(p.n0)
    if N == size:
        return _classify_minus(sigma, p.n0).label is not ClassLabel.R
    if N == size + 1:
        return _classify_minus(sigma, p.n0).label.in_Rplus
    return False


def in_valley_zero(sigma: SpinConfiguration, p: ModelParams) -> bool:
    """
    0 的谷: 至多 n₀(n₀+1) 个格点不为 0，
    或不含 -1 自旋且整体减一后属于 R⁺
    """
    N = sigma.lattice.size - sigma.counts[1]
    size = critical_size(p.n0)
    if N <= size:
        return True
    if N > size + 1 or sigma.counts[0]:
        return False
    return _classify_minus(spin_shift(sigma, -1), p.n0).label.in_Rplus


def in_R(sigma: SpinConfiguration, p: ModelParams) -> bool:
    result = classify(sigma, p)
    return result.background == -1 and result.label is ClassLabel.R


def in_Ra(sigma: SpinConfiguration, p: ModelParams) -> bool:
    result = classify(sigma, p)
    return result.background == -1 and result.label.attached


def in_Rl(sigma: SpinConfiguration, p: ModelParams) -> bool:
    """Rˡ = Rˡᶜ ∪ Rˡⁱ (突起在长边上)"""
    result = classify(sigma, p)
    return result.background == -1 and result.label in (ClassLabel.RA_LC, ClassLabel.RA_LI)


def in_Rl0(sigma: SpinConfiguration, p: ModelParams) -> bool:
    result = classify(sigma, p)
    return result.background == 0 and result.label in (ClassLabel.RA_LC, ClassLabel.RA_LI)


def is_stable(sigma: SpinConfiguration, p: ModelParams) -> bool:
    """所有 2L² 个翻转的 ΔH 都为正"""
    h = p.h
    for site in range(sigma.lattice.size):
        for direction in (1, -1):
            bond_delta, spin_delta = flip_terms(sigma, site, direction)
            if bond_delta - h * spin_delta <= 0.0:
                return False
    return True


def enumerate_Ra(p: ModelParams) -> Iterator[Tuple[ClassLabel, SpinConfiguration]]:
    """
    枚举 Rᵃ 中全部构型: 两种朝向 × |Λ| 个位置 × 2(2n₀+1) 个贴附位置
    """
    n0 = p.n0
    lattice = p.lattice
    for w, h in ((n0, n0 + 1), (n0 + 1, n0)):
        _check_fits(lattice, w, h)
        for anchor in range(lattice.size):
            for side in SIDES:
                length = w if side in ("bottom", "top") else h
                for offset in range(length):
                    sigma = make_rectangle(p, anchor, w, h, protuberance=(side, offset))
                    extra = protuberance_site(lattice, anchor, w, h, side, offset)
                    yield _attachment(lattice, anchor, w, h, extra), sigma


class ExitWeights(NamedTuple):
    """从 Rᵃ 子类出发先到 -1 / 先到 0 的极限概率"""
    minus_first: float
    zero_first: float
    slots: int


def exit_slot_weights(n0: int) -> Dict[ClassLabel, ExitWeights]:
    """
    每个矩形上各子类的贴附位置数及极限退出概率:
    Rˡᶜ 4 个 (1/2, 1/2)，Rˡⁱ 2(n₀-1) 个 (1/3, 2/3)，Rˢ 2n₀ 个 (1, 0)
    """
    if n0 < 2:
        raise ModelError(f"子类划分要求 n₀ ≥ 2: {n0}")
    return {
        ClassLabel.RA_LC: ExitWeights(0.5, 0.5, 4),
        ClassLabel.RA_LI: ExitWeights(1.0 / 3.0, 2.0 / 3.0, 2 * (n0 - 1)),
        ClassLabel.RA_S: ExitWeights(1.0, 0.0, 2 * n0),
    }


def average_zero_first(n0: int) -> float:
    """按均匀贴附位置平均的先到 0 概率，恒等于 1/3"""
    weights = exit_slot_weights(n0)
    total = sum(w.slots for w in weights.values())
    return sum(w.slots * w.zero_first for w in weights.values()) / total


# ---------------------------------------------------------------------------
# 渐近尺度

class ScaleValue(NamedTuple):
    log: float
    value: float


def _scale(terms: Sequence[Tuple[float, float]], beta: float) -> ScaleValue:
    """Σ Cᵢ·e^{-aᵢβ}，terms 为 (Cᵢ, aᵢ)，在对数空间求和"""
    logs = np.array([math.log(c) - a * beta for c, a in terms])
    log_value = float(logsumexp(logs))
    return ScaleValue(log_value, math.exp(log_value) if log_value < 700 else math.inf)


@dataclass(frozen=True)
class RegimeReport:
    """渐近条件与误差尺度，全部可由 (L, h, β, n) 重算"""
    L: int
    h: float
    beta: float
    n: int
    torus_condition: ScaleValue
    growth_condition_a: ScaleValue
    growth_condition_b: ScaleValue
    epsilon: ScaleValue
    delta: ScaleValue
    delta1: ScaleValue
    delta2: ScaleValue
    delta3: ScaleValue
    delta4: ScaleValue
    delta4_prime: ScaleValue
    delta5: ScaleValue
    kappa: ScaleValue

    CONDITIONS = ("torus_condition", "growth_condition_a", "growth_condition_b")
    SCALES = ("epsilon", "delta", "delta1", "delta2", "delta3",
              "delta4", "delta4_prime", "delta5", "kappa")

    @property
    def satisfied(self) -> Dict[str, bool]:
        return {name: getattr(self, name).value < REGIME_THRESHOLD for name in self.CONDITIONS}

    @property
    def all_satisfied(self) -> bool:
        return all(self.satisfied.values())

    def rows(self) -> List[Tuple[str, float, float, Optional[bool]]]:
        """(名称, log 值, 线性值, 是否满足)；尺度没有满足与否"""
        flags = self.satisfied
        rows = [(name, getattr(self, name).log, getattr(self, name).value, flags[name])
                for name in self.CONDITIONS]
        rows.extend((name, getattr(self, name).log, getattr(self, name).value, None)
                    for name in self.SCALES)
        return rows


def regime_report(p: ModelParams, n: int = 1) -> RegimeReport:
    if n < 1:
        raise ModelError(f"κ_n 要求 n ≥ 1: {n}")
    V = float(p.volume)
    h, b, n0 = p.h, p.beta, p.n0
    root = math.sqrt(V)
    growth = (n0 + 1) * h - 2
    return RegimeReport(
        L=p.lattice.side_length, h=h, beta=b, n=n,
        torus_condition=_scale([(V, 2.0)], b),
        growth_condition_a=_scale([(root, growth), (root, h)], b),
        growth_condition_b=_scale([(V * V, 2 - h)], b),
        epsilon=_scale([(V, 2.0), (1.0, h)], b),
        delta=_scale([(root, growth), (root, h), (V * V, 2 - h)], b),
        delta1=_scale([(1.0, h), (root, 2 - h), (V, 4 - h)], b),
        delta2=_scale([(V, 4 - n0 * h), (1.0, h)], b),
        delta3=_scale([(1.0, growth), (root, 2 - h), (V, 2.0)], b),
        delta4=_scale([(V * root, 4 - h), (V, 2 - h)], b),
        delta4_prime=_scale([(V, 4 - h), (root, 2 - h)], b),
        delta5=_scale([(1.0, growth), (1.0, h), (V * root, 2 - h)], b),
        kappa=_scale([(1.0, h), (float(n), 2 - h), (V, 4 - h)], b),
    )


# 使用示例
if __name__ == "__main__":
    params = ModelParams.create(L=9, h=0.9, beta=5.0)
    print(f"n₀ = {critical_side(params.h)}，Γ_c = {gamma_c(params)}")
    zeta = make_spiral(params, 0, critical_size(params.n0) + 1)
    print(f"最后一个螺旋构型的类别: {classify(zeta, params).token}")
    for row in regime_report(params).rows():
        print(row)
