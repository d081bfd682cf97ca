#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/lattice.py
晶格模型 - 二维环面、自旋构型、哈密顿量及构型统计量

自旋以 0/1/2 编码 (对应 -1/0/+1) 存放在 bytearray 中，
构型同时维护三种自旋的计数器，使 N、N1 和投影 Ψ 都是 O(1) 查询。
"""

import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

# 整数 2/h 的判定容差
INTEGER_TOLERANCE = 1e-9


class BclabError(Exception):
    """所有领域错误的基类"""


class ModelError(BclabError, ValueError):
    """构造或前置条件错误"""


class EnergyDriftError(BclabError, RuntimeError):
    """缓存能量与重新计算的能量不一致"""


class CatalogDesyncError(BclabError, RuntimeError):
    """增量维护的事件表与重建结果不一致"""


class ZeroRateError(BclabError, RuntimeError):
    """总速率为零时无法采样"""


class ClosureOverflowError(BclabError, RuntimeError):
    """枚举的状态数超过上限"""

    def __init__(self, count: int, cap: int):
        super().__init__(f"闭包状态数超过上限 {cap} (已枚举 {count})")
        self.count = count
        self.cap = cap


class FlowError(ModelError):
    """流不满足单位流条件，或构造所需的状态缺失"""


class SolverError(BclabError, RuntimeError):
    """线性方程组求解失败"""


class Spin(IntEnum):
    """单个格点的三种自旋取值"""
    MINUS = -1
    ZERO = 0
    PLUS = 1

    @property
    def code(self) -> int:
        return self.value + 1

    @property
    def symbol(self) -> str:
        return SPIN_SYMBOLS[self.value + 1]


class Direction(IntEnum):
    """循环翻转方向: + 为 -1→0→+1→-1，- 为其逆"""
    UP = 1
    DOWN = -1

    @property
    def token(self) -> str:
        return "+" if self is Direction.UP else "-"

    @classmethod
    def from_token(cls, token: str) -> "Direction":
        if token == "+":
            return cls.UP
        if token == "-":
            return cls.DOWN
        raise ModelError(f"无效的翻转方向: {token!r}")


# 快照编码符号，下标为自旋编码
SPIN_SYMBOLS = ("m", "z", "p")

# BOND[a][b] = (σ(y) - σ(x))²，下标为自旋编码
BOND = (
    (0, 1, 4),
    (1, 0, 1),
    (4, 1, 0),
)


@dataclass(frozen=True)
class TorusLattice:
    """L×L 周期环面，格点按行优先编号 site = y·L + x"""
    side_length: int
    neighbors: Tuple[Tuple[int, int, int, int], ...] = field(init=False, repr=False, compare=False)
    pairs: Tuple[Tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        L = self.side_length
        if not isinstance(L, int) or L < 2:
            raise ModelError(f"环面边长必须是不小于2的整数: {L!r}")

        neighbors = []
        pairs = []
        for site in range(L * L):
            x, y = site % L, site // L
            right = y * L + (x + 1) % L
            left = y * L + (x - 1) % L
            up = ((y + 1) % L) * L + x
            down = ((y - 1) % L) * L + x
            neighbors.append((right, left, up, down))
            # 每个无序键只从左/下端点登记一次
            pairs.append((site, right))
            pairs.append((site, up))

        object.__setattr__(self, "neighbors", tuple(neighbors))
        object.__setattr__(self, "pairs", tuple(pairs))

    @property
    def size(self) -> int:
        return self.side_length * self.side_length

    def site(self, x: int, y: int) -> int:
        L = self.side_length
        return (y % L) * L + (x % L)

    def coords(self, site: int) -> Tuple[int, int]:
        return site % self.side_length, site // self.side_length

    def shift(self, site: int, dx: int, dy: int) -> int:
        x, y = self.coords(site)
        return self.site(x + dx, y + dy)

    def check_site(self, site: int):
        if not 0 <= site < self.size:
            raise ModelError(f"格点编号越界: {site} (|Λ|={self.size})")


@dataclass(frozen=True)
class ModelParams:
    """模型参数: 外场 h、逆温度 β 以及环面"""
    h: float
    beta: float
    lattice: TorusLattice

    def __post_init__(self):
        if not 0.0 < self.h < 2.0:
            raise ModelError(f"外场 h 必须位于 (0,2): {self.h}")
        if not self.beta > 0.0:
            raise ModelError(f"逆温度 β 必须为正: {self.beta}")
        ratio = 2.0 / self.h
        if abs(ratio - round(ratio)) < INTEGER_TOLERANCE:
            raise ModelError(f"2/h 不能是整数: h={self.h}")
        for k in range(1, 11):
            if abs(self.h - 2.0 / k) < INTEGER_TOLERANCE:
                raise ModelError(f"h 过于接近 2/{k}: h={self.h}")

    @classmethod
    def create(cls, L: int, h: float, beta: float) -> "ModelParams":
        return cls(h=h, beta=beta, lattice=TorusLattice(L))

    @property
    def critical_side(self) -> int:
        return int(math.floor(2.0 / self.h))

    @property
    def n0(self) -> int:
        return self.critical_side

    @property
    def theorem_regime(self) -> bool:
        """h ∈ (0,1)，等价于 n0 ≥ 2"""
        return self.h < 1.0

    @property
    def volume(self) -> int:
        return self.lattice.size

    def with_beta(self, beta: float) -> "ModelParams":
        return ModelParams(h=self.h, beta=beta, lattice=self.lattice)


class SpinConfiguration:
    """
    环面上的自旋构型

    codes 为 bytearray，每个格点一个字节 (0/1/2 对应 -1/0/+1)；
    counts[c] 为编码 c 的格点数；能量缓存与外场 h 绑定。

    不做每格 2 比特的压缩存储: L=256 时一个构型也只有 64 KiB，
    按字节存放可直接用 bytes(codes) 作为字典键，单点读写不需要位运算。
    """

    __slots__ = ("lattice", "codes", "counts", "_energy", "_energy_h")

    def __init__(self, lattice: TorusLattice, codes: bytearray,
                 energy: Optional[float] = None, energy_h: Optional[float] = None):
        if len(codes) != lattice.size:
            raise ModelError(f"构型长度 {len(codes)} 与环面大小 {lattice.size} 不符")
        self.lattice = lattice
        self.codes = codes
        self.counts = [codes.count(0), codes.count(1), codes.count(2)]
        if sum(self.counts) != lattice.size:
            raise ModelError("构型中含有非法自旋编码")
        self._energy = energy
        self._energy_h = energy_h

    @classmethod
    def uniform(cls, lattice: TorusLattice, spin: int) -> "SpinConfiguration":
        code = Spin(spin).code
        return cls(lattice, bytearray([code]) * lattice.size)

    @classmethod
    def from_spins(cls, lattice: TorusLattice, spins: Iterable[int]) -> "SpinConfiguration":
        try:
            codes = bytearray(Spin(int(s)).code for s in spins)
        except ValueError as e:
            raise ModelError(f"非法自旋值: {e}") from e
        return cls(lattice, codes)

    @classmethod
    def from_sites(cls, lattice: TorusLattice, sites: Iterable[int],
                   inner: int = 0, outer: int = -1) -> "SpinConfiguration":
        """outer 自旋海洋中把给定格点置为 inner"""
        codes = bytearray([Spin(outer).code]) * lattice.size
        inner_code = Spin(inner).code
        for site in sites:
            lattice.check_site(site)
            codes[site] = inner_code
        return cls(lattice, codes)

    def spin(self, site: int) -> int:
        return self.codes[site] - 1

    def spins(self) -> List[int]:
        return [c - 1 for c in self.codes]

    def key(self) -> bytes:
        return bytes(self.codes)

    def copy(self) -> "SpinConfiguration":
        clone = SpinConfiguration.__new__(SpinConfiguration)
        clone.lattice = self.lattice
        clone.codes = bytearray(self.codes)
        clone.counts = list(self.counts)
        clone._energy = self._energy
        clone._energy_h = self._energy_h
        return clone

    @property
    def cached_energy(self) -> Optional[float]:
        return self._energy

    def set_cached_energy(self, value: float, h: float):
        self._energy = value
        self._energy_h = h

    def is_uniform(self, spin: int) -> bool:
        return self.counts[spin + 1] == self.lattice.size

    def flip(self, site: int, direction: int, delta: Optional[float] = None):
        """原地循环翻转；给出 delta 时同步更新能量缓存"""
        old = self.codes[site]
        new = (old + 1) % 3 if direction > 0 else (old + 2) % 3
        self.codes[site] = new
        self.counts[old] -= 1
        self.counts[new] += 1
        if self._energy is not None:
            if delta is None:
                self._energy = None
            else:
                self._energy += delta

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpinConfiguration):
            return NotImplemented
        return self.lattice == other.lattice and self.codes == other.codes

    __hash__ = None

    def __repr__(self) -> str:
        return f"<SpinConfiguration L={self.lattice.side_length} {run_length_encode(self.codes)}>"


def _check_match(sigma: SpinConfiguration, p: ModelParams):
    if sigma.lattice != p.lattice:
        raise ModelError(
            f"构型环面 L={sigma.lattice.side_length} 与参数环面 L={p.lattice.side_length} 不符")


def energy(sigma: SpinConfiguration, p: ModelParams, use_cache: bool = True) -> float:
    """ℍ(σ) = Σ_{无序近邻对}(σ(y)-σ(x))² - h·Σσ(x)"""
    _check_match(sigma, p)
    if use_cache and sigma._energy is not None and sigma._energy_h == p.h:
        return sigma._energy

    codes = sigma.codes
    bonds = 0
    for a, b in sigma.lattice.pairs:
        bonds += BOND[codes[a]][codes[b]]
    magnetization = sigma.counts[2] - sigma.counts[0]
    value = bonds - p.h * magnetization
    sigma.set_cached_energy(value, p.h)
    return value


def flip_terms(sigma: SpinConfiguration, site: int, direction: int) -> Tuple[int, int]:
    """
    返回翻转引起的 (键能变化, 自旋变化)，二者都是整数

    ΔH = bond_delta - h·spin_delta，只涉及4条邻接键
    """
    codes = sigma.codes
    old = codes[site]
    new = (old + 1) % 3 if direction > 0 else (old + 2) % 3
    row_old = BOND[old]
    row_new = BOND[new]
    bond_delta = 0
    for y in sigma.lattice.neighbors[site]:
        c = codes[y]
        bond_delta += row_new[c] - row_old[c]
    return bond_delta, new - old


def delta_energy(sigma: SpinConfiguration, site: int, direction: int, p: ModelParams) -> float:
    """ℍ(σ^{x,±}) - ℍ(σ)，O(1)"""
    sigma.lattice.check_site(site)
    bond_delta, spin_delta = flip_terms(sigma, site, direction)
    return bond_delta - p.h * spin_delta


def apply_flip(sigma: SpinConfiguration, site: int, direction: int,
               p: Optional[ModelParams] = None) -> SpinConfiguration:
    """返回翻转后的新构型；给出参数时能量缓存随 delta_energy 更新"""
    sigma.lattice.check_site(site)
    result = sigma.copy()
    delta = None
    if p is not None:
        if result._energy is None or result._energy_h != p.h:
            energy(result, p)
        delta = delta_energy(result, site, direction, p)
    result.flip(site, direction, delta)
    return result


def verify_energy(sigma: SpinConfiguration, p: ModelParams, rtol: float = 1e-12) -> float:
    """从头重算能量并与缓存比较，不一致时抛出 EnergyDriftError"""
    cached = sigma._energy if sigma._energy_h == p.h else None
    fresh = energy(sigma, p, use_cache=False)
    if cached is not None:
        scale = max(1.0, abs(fresh))
        if abs(cached - fresh) > rtol * scale:
            raise EnergyDriftError(f"能量漂移: 缓存 {cached!r} 重算 {fresh!r}")
    return fresh


@dataclass(frozen=True)
class SiteStatistics:
    """构型统计: N、N1、A(σ) 和磁化强度"""
    N: int
    N1: int
    A: FrozenSet[int]
    magnetization: int


def non_minus_sites(sigma: SpinConfiguration) -> List[int]:
    codes = sigma.codes
    return [i for i in range(len(codes)) if codes[i]]


def site_statistics(sigma: SpinConfiguration) -> SiteStatistics:
    return SiteStatistics(
        N=sigma.counts[1] + sigma.counts[2],
        N1=sigma.counts[2],
        A=frozenset(non_minus_sites(sigma)),
        magnetization=sigma.counts[2] - sigma.counts[0],
    )


def interface_count(sigma: SpinConfiguration, a: int, b: int) -> int:
    """自旋值为 {a,b} 的无序近邻对数目"""
    if a == b:
        raise ModelError("界面计数要求 a ≠ b")
    ca, cb = Spin(min(a, b)).code, Spin(max(a, b)).code
    codes = sigma.codes
    count = 0
    for x, y in sigma.lattice.pairs:
        u, v = codes[x], codes[y]
        if (u == ca and v == cb) or (u == cb and v == ca):
            count += 1
    return count


def connected_components(sigma: SpinConfiguration) -> List[FrozenSet[int]]:
    """A(σ) 的近邻连通分量，按最小格点排序"""
    codes = sigma.codes
    neighbors = sigma.lattice.neighbors
    seen = set()
    components = []
    for start in range(len(codes)):
        if not codes[start] or start in seen:
            continue
        stack = [start]
        seen.add(start)
        component = []
        while stack:
            site = stack.pop()
            component.append(site)
            for y in neighbors[site]:
                if codes[y] and y not in seen:
                    seen.add(y)
                    stack.append(y)
        components.append(frozenset(component))
    return components


def flatten(sigma: SpinConfiguration) -> SpinConfiguration:
    """σ°(x) = min(σ(x), 0)"""
    return SpinConfiguration(sigma.lattice, bytearray(min(c, 1) for c in sigma.codes))


def spin_shift(sigma: SpinConfiguration, k: int) -> SpinConfiguration:
    """每个自旋加 k；结果必须仍在 {-1,0,+1} 内"""
    if k not in (-1, 1):
        raise ModelError(f"自旋平移只允许 ±1: {k}")
    codes = bytearray(len(sigma.codes))
    for i, c in enumerate(sigma.codes):
        v = c + k
        if not 0 <= v <= 2:
            raise ModelError("自旋平移越出 {-1,0,+1}")
        codes[i] = v
    return SpinConfiguration(sigma.lattice, codes)


def translate(sigma: SpinConfiguration, dx: int, dy: int) -> SpinConfiguration:
    lattice = sigma.lattice
    codes = bytearray(lattice.size)
    for site, c in enumerate(sigma.codes):
        codes[lattice.shift(site, dx, dy)] = c
    return SpinConfiguration(lattice, codes)


def log_relative_gibbs_weight(sigma: SpinConfiguration, sigma_ref: SpinConfiguration,
                              p: ModelParams) -> float:
    return -p.beta * (energy(sigma, p) - energy(sigma_ref, p))


def relative_gibbs_weight(sigma: SpinConfiguration, sigma_ref: SpinConfiguration,
                          p: ModelParams) -> float:
    """exp(-β(ℍ(σ)-ℍ(σ_ref)))，不计算配分函数"""
    if sigma.lattice != sigma_ref.lattice:
        raise ModelError("两个构型不在同一环面上")
    log_w = log_relative_gibbs_weight(sigma, sigma_ref, p)
    try:
        return math.exp(log_w)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# 快照格式: "L h RLE"，例如 "5 0.9 24m1z"

_RLE_TOKEN = re.compile(r"(\d+)([mzp])")


def run_length_encode(codes: Iterable[int]) -> str:
    parts = []
    last, run = None, 0
    for c in codes:
        if c == last:
            run += 1
            continue
        if last is not None:
            parts.append(f"{run}{SPIN_SYMBOLS[last]}")
        last, run = c, 1
    if last is not None:
        parts.append(f"{run}{SPIN_SYMBOLS[last]}")
    return "".join(parts)


def run_length_decode(text: str) -> bytearray:
    codes = bytearray()
    pos = 0
    for match in _RLE_TOKEN.finditer(text):
        if match.start() != pos:
            raise ModelError(f"无法解析的游程编码: {text!r}")
        codes.extend(bytearray([SPIN_SYMBOLS.index(match.group(2))]) * int(match.group(1)))
        pos = match.end()
    if pos != len(text):
        raise ModelError(f"无法解析的游程编码: {text!r}")
    return codes


def encode_snapshot(sigma: SpinConfiguration, h: float) -> str:
    return f"{sigma.lattice.side_length} {h!r} {run_length_encode(sigma.codes)}"


def decode_snapshot(line: str) -> Tuple[SpinConfiguration, float]:
    tokens = line.split()
    if len(tokens) != 3:
        raise ModelError(f"快照格式应为 'L h RLE': {line!r}")
    lattice = TorusLattice(int(tokens[0]))
    return SpinConfiguration(lattice, run_length_decode(tokens[2])), float(tokens[1])


def spin_histogram(sigma: SpinConfiguration) -> Dict[int, int]:
    return {-1: sigma.counts[0], 0: sigma.counts[1], 1: sigma.counts[2]}


# 使用示例
if __name__ == "__main__":
    params = ModelParams.create(L=5, h=0.9, beta=1.0)
    sigma = SpinConfiguration.uniform(params.lattice, -1)
    print(f"ℍ(-1) = {energy(sigma, params)}")
    rho = apply_flip(sigma, 12, Direction.UP, params)
    print(f"单个0自旋: ℍ = {energy(rho, params)}  快照: {encode_snapshot(rho, params.h)}")
