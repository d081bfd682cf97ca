#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/dynamics.py
连续时间 Metropolis 动力学 - 无拒绝 (n-fold way) 事件驱动采样器

速率 R(σ,σ^{x,±}) = exp(-β[ℍ(σ^{x,±}) - ℍ(σ)]₊)，
每个格点两个循环翻转，共 2L² 个事件，按速率存放在求和树中。
"""

import math
from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.lattice import (
    CatalogDesyncError, Direction, ModelError, ModelParams, SpinConfiguration, ZeroRateError,
    encode_snapshot, decode_snapshot, energy, flip_terms, verify_energy,
)

Predicate = Callable[[SpinConfiguration], bool]

DEFAULT_EVENT_CAP = 10 ** 9
DEFAULT_CHECK_EVERY = 10 ** 6


@dataclass(frozen=True)
class Move:
    """单个翻转事件: 格点 + 方向"""
    site: int
    direction: Direction

    @property
    def index(self) -> int:
        return 2 * self.site + (0 if self.direction > 0 else 1)

    @classmethod
    def from_index(cls, index: int) -> "Move":
        return cls(index >> 1, Direction.UP if index & 1 == 0 else Direction.DOWN)

    def __str__(self) -> str:
        return f"{self.site}{self.direction.token}"


class RateTable:
    """
    速率缓存: ΔH = bond_delta - h·spin_delta 只取有限个整数组合，
    因此 exp(-β[ΔH]₊) 按 (bond_delta, spin_delta) 记忆
    """

    def __init__(self, p: ModelParams):
        self.params = p
        self._cache: Dict[Tuple[int, int], float] = {}

    def rate(self, bond_delta: int, spin_delta: int) -> float:
        key = (bond_delta, spin_delta)
        value = self._cache.get(key)
        if value is None:
            dh = bond_delta - self.params.h * spin_delta
            value = math.exp(-self.params.beta * dh) if dh > 0.0 else 1.0
            self._cache[key] = value
        return value

    def move_rate(self, sigma: SpinConfiguration, site: int, direction: int) -> float:
        return self.rate(*flip_terms(sigma, site, direction))


def flip_rate(sigma: SpinConfiguration, move: Move, p: ModelParams) -> float:
    """exp(-β·max(ΔH,0))"""
    sigma.lattice.check_site(move.site)
    bond_delta, spin_delta = flip_terms(sigma, move.site, move.direction)
    dh = bond_delta - p.h * spin_delta
    return math.exp(-p.beta * dh) if dh > 0.0 else 1.0


def holding_rate(sigma: SpinConfiguration, p: ModelParams) -> float:
    """λ(σ) = 所有 2L² 个翻转速率之和"""
    table = RateTable(p)
    return math.fsum(
        table.move_rate(sigma, site, direction)
        for site in range(sigma.lattice.size)
        for direction in (Direction.UP, Direction.DOWN)
    )


class SumTree:
    """
    求和线段树: 叶子存放速率，内部节点为子节点之和

    单点更新沿路径重新求和 (而不是累加差值)，
    因此根节点始终等于叶子之和，不会累积漂移。
    """

    def __init__(self, size: int):
        capacity = 1
        while capacity < size:
            capacity <<= 1
        self.size = size
        self.capacity = capacity
        self.tree = [0.0] * (2 * capacity)

    @property
    def total(self) -> float:
        return self.tree[1]

    def __getitem__(self, index: int) -> float:
        return self.tree[self.capacity + index]

    def __setitem__(self, index: int, value: float):
        tree = self.tree
        i = self.capacity + index
        tree[i] = value
        i >>= 1
        while i:
            tree[i] = tree[2 * i] + tree[2 * i + 1]
            i >>= 1

    def rebuild(self, values: Optional[Sequence[float]] = None):
        tree = self.tree
        cap = self.capacity
        if values is not None:
            tree[cap:cap + self.size] = list(values)
        for i in range(cap - 1, 0, -1):
            tree[i] = tree[2 * i] + tree[2 * i + 1]

    def find(self, target: float) -> int:
        """返回满足前缀和覆盖 target 的叶子下标，跳过零速率子树"""
        tree = self.tree
        i = 1
        cap = self.capacity
        while i < cap:
            left = tree[2 * i]
            if target < left or tree[2 * i + 1] <= 0.0:
                i = 2 * i
            else:
                target -= left
                i = 2 * i + 1
        return i - cap

    def leaves(self) -> List[float]:
        return self.tree[self.capacity:self.capacity + self.size]


class EventCatalog:
    """每个翻转事件的速率表及其求和树"""

    def __init__(self, p: ModelParams, table: Optional[RateTable] = None):
        self.params = p
        self.table = table or RateTable(p)
        self.tree = SumTree(2 * p.lattice.size)
        self.updates = 0

    @property
    def total(self) -> float:
        return self.tree.total

    def rate(self, move: Move) -> float:
        return self.tree[move.index]

    def rates(self) -> List[float]:
        return self.tree.leaves()

    def fresh_rates(self, sigma: SpinConfiguration) -> List[float]:
        move_rate = self.table.move_rate
        rates = []
        for site in range(sigma.lattice.size):
            rates.append(move_rate(sigma, site, 1))
            rates.append(move_rate(sigma, site, -1))
        return rates

    def verify(self, sigma: SpinConfiguration, rtol: float = 1e-9):
        """与从头构建的速率逐项比较，并整体重算内部节点"""
        fresh = self.fresh_rates(sigma)
        stored = self.rates()
        for index, (a, b) in enumerate(zip(stored, fresh)):
            if abs(a - b) > rtol * max(abs(b), 1e-300):
                move = Move.from_index(index)
                raise CatalogDesyncError(
                    f"事件表失步: 事件 {move} 存储速率 {a!r}，应为 {b!r} (已更新 {self.updates} 次)")
        before = self.tree.total
        self.tree.rebuild()
        after = self.tree.total
        if abs(before - after) > rtol * max(after, 1e-300):
            raise CatalogDesyncError(f"总速率漂移: {before!r} → {after!r}")


def build_catalog(sigma: SpinConfiguration, p: ModelParams) -> EventCatalog:
    catalog = EventCatalog(p)
    catalog.tree.rebuild(catalog.fresh_rates(sigma))
    return catalog


def refresh_after_flip(catalog: EventCatalog, sigma_after: SpinConfiguration,
                       move: Move, p: ModelParams) -> int:
    """只更新翻转格点及其4个近邻的速率；返回更新的条目数"""
    return _refresh_neighborhood(catalog, sigma_after, move.site)


def _refresh_neighborhood(catalog: EventCatalog, sigma_after: SpinConfiguration, flipped: int) -> int:
    move_rate = catalog.table.move_rate
    tree = catalog.tree
    touched = 0
    sites = (flipped,) + sigma_after.lattice.neighbors[flipped]
    for site in dict.fromkeys(sites):
        tree[2 * site] = move_rate(sigma_after, site, 1)
        tree[2 * site + 1] = move_rate(sigma_after, site, -1)
        touched += 2
    catalog.updates += 1
    return touched


class RngStream:
    """
    可复现的随机数流: SeedSequence([seed, stream]) → PCG64

    均匀数成批生成后逐个取用；相同 (seed, stream) 产生相同序列。
    """

    MASK64 = (1 << 64) - 1

    def __init__(self, seed: int, stream: int = 0, buffer_size: int = 4096):
        self.seed = int(seed)
        self.stream = int(stream)
        sequence = np.random.SeedSequence([self.seed & self.MASK64, self.stream])
        self._generator = np.random.Generator(np.random.PCG64(sequence))
        self._buffer_size = buffer_size
        self._buffer: List[float] = []
        self._pos = 0

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def uniform(self) -> float:
        if self._pos >= len(self._buffer):
            self._buffer = self._generator.random(self._buffer_size).tolist()
            self._pos = 0
        u = self._buffer[self._pos]
        self._pos += 1
        return u

    def exponential(self, rate: float) -> float:
        """Exp(rate) 抽样，保证严格为正"""
        u = self.uniform()
        while u == 0.0:
            u = self.uniform()
        return -math.log(u) / rate


def sample_step(catalog: EventCatalog, rng: RngStream) -> Tuple[float, Move]:
    """Δt ~ Exp(λ)，事件按 R/λ 选取"""
    total = catalog.total
    if not total > 0.0:
        raise ZeroRateError("总速率为零，无法采样下一个事件")
    dt = rng.exponential(total)
    index = catalog.tree.find(rng.uniform() * total)
    return dt, Move.from_index(index)


class CompensatedClock:
    """Kahan 补偿求和的模拟时钟"""

    __slots__ = ("value", "_compensation")

    def __init__(self, start: float = 0.0):
        self.value = start
        self._compensation = 0.0

    def add(self, dt: float) -> float:
        y = dt - self._compensation
        t = self.value + y
        self._compensation = (t - self.value) - y
        self.value = t
        return t


class StopReason(Enum):
    """停止原因"""
    TARGET = "target"
    TIME_CAP = "time_cap"
    EVENT_CAP = "event_cap"
    NO_MOVES = "no_moves"

    @property
    def is_cap(self) -> bool:
        return self is not StopReason.TARGET


@dataclass
class StopCondition:
    """
    停止条件: 目标集合 (带标签的谓词)、时间上限、事件上限

    arm_after_first_jump=True 时实现返回时间 H⁺: 第一次跳跃前不检查目标；
    watch 中的谓词只记录首次命中时间，不停止运行。
    """
    targets: List[Tuple[str, Predicate]] = field(default_factory=list)
    time_cap: Optional[float] = None
    event_cap: Optional[int] = DEFAULT_EVENT_CAP
    arm_after_first_jump: bool = False
    watch: List[Tuple[str, Predicate]] = field(default_factory=list)

    def __post_init__(self):
        if not self.targets and self.time_cap is None and self.event_cap is None:
            raise ModelError("停止条件至少需要一个目标集合或上限")

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.targets]

    def first_target(self, sigma: SpinConfiguration) -> Optional[str]:
        for label, predicate in self.targets:
            if predicate(sigma):
                return label
        return None


def monochrome_spin(sigma: SpinConfiguration) -> Optional[int]:
    """σ 为单色构型时返回其自旋，否则 None"""
    size = sigma.lattice.size
    counts = sigma.counts
    if counts[0] == size:
        return -1
    if counts[1] == size:
        return 0
    if counts[2] == size:
        return 1
    return None


@dataclass
class Trajectory:
    """
    轨迹: 初始构型、事件序列 (累计时间, 格点, 方向)、停止信息

    psi_segments 为投影 Ψ 的游程记录 [(单色自旋或None, 持续时间)]，
    在线维护，不依赖事件记录。
    """
    initial: SpinConfiguration
    L: int
    h: float
    beta: float
    seed: int
    stream: int
    event_times: array = field(default_factory=lambda: array("d"))
    event_sites: array = field(default_factory=lambda: array("l"))
    event_dirs: array = field(default_factory=lambda: array("b"))
    record_events: bool = True
    total_time: float = 0.0
    event_count: int = 0
    stop_reason: Optional[StopReason] = None
    hit_label: Optional[str] = None
    hit_time: Optional[float] = None
    first_hits: Dict[str, float] = field(default_factory=dict)
    psi_segments: List[Tuple[Optional[int], float]] = field(default_factory=list)
    final: Optional[SpinConfiguration] = None

    @property
    def events(self) -> Iterator[Tuple[float, Move]]:
        """(Δt, Move) 序列"""
        previous = 0.0
        for t, site, d in zip(self.event_times, self.event_sites, self.event_dirs):
            yield t - previous, Move(site, Direction(d))
            previous = t

    def _require_events(self):
        if not self.record_events:
            raise ModelError("该轨迹未记录事件序列")

    def replay(self) -> SpinConfiguration:
        self._require_events()
        sigma = self.initial.copy()
        for site, d in zip(self.event_sites, self.event_dirs):
            sigma.flip(site, d)
        return sigma

    def states(self) -> Iterator[Tuple[SpinConfiguration, float]]:
        """依次给出 (构型, 在该构型停留的时间)；构型对象会被原地修改"""
        self._require_events()
        sigma = self.initial.copy()
        previous = 0.0
        for t, site, d in zip(self.event_times, self.event_sites, self.event_dirs):
            yield sigma, t - previous
            sigma.flip(site, d)
            previous = t
        yield sigma, self.total_time - previous


def _trial(sigma: SpinConfiguration, site: int, direction: int, predicate: Predicate) -> bool:
    """试探翻转后评估谓词并恢复原构型 (含能量缓存)"""
    saved_energy, saved_h = sigma._energy, sigma._energy_h
    sigma.flip(site, direction)
    try:
        return predicate(sigma)
    finally:
        sigma.flip(site, -direction)
        sigma._energy, sigma._energy_h = saved_energy, saved_h


def _valley_mask(rates: List[float], sigma: SpinConfiguration, valley: Predicate) -> List[float]:
    """
    把离开 valley 的翻转速率置零

    谷的判定依赖 N(σ) 等整体量，一次翻转可以改变远处翻转是否出谷，
    所以掩码对所有正速率事件重新判定；底层速率仍只做局部更新。
    """
    masked = list(rates)
    for index, rate in enumerate(rates):
        if rate > 0.0 and not _trial(sigma, index >> 1, 1 if index & 1 == 0 else -1, valley):
            masked[index] = 0.0
    return masked


def _simulate(sigma0: SpinConfiguration, stop: StopCondition, p: ModelParams, rng: RngStream,
              record_events: bool, valley: Optional[Predicate],
              check_every: int) -> Trajectory:
    sigma = sigma0.copy()
    energy(sigma, p)
    traj = Trajectory(initial=sigma0.copy(), L=p.lattice.side_length, h=p.h, beta=p.beta,
                      seed=rng.seed, stream=rng.stream, record_events=record_events)

    catalog = build_catalog(sigma, p)
    # 反射过程在底层速率之外另有一棵掩码后的求和树
    tree = catalog.tree
    if valley is not None:
        tree = SumTree(catalog.tree.size)
        tree.rebuild(_valley_mask(catalog.rates(), sigma, valley))
    h = p.h

    clock = CompensatedClock()
    events = 0
    psi_label = monochrome_spin(sigma)
    psi_duration = 0.0
    pending_watch = list(stop.watch)

    def note_watch(now: float):
        nonlocal pending_watch
        if not pending_watch:
            return
        still = []
        for label, predicate in pending_watch:
            if predicate(sigma):
                traj.first_hits[label] = now
            else:
                still.append((label, predicate))
        pending_watch = still

    reason = None
    if not stop.arm_after_first_jump:
        note_watch(0.0)
        label = stop.first_target(sigma)
        if label is not None:
            reason = StopReason.TARGET
            traj.hit_label, traj.hit_time = label, 0.0

    while reason is None:
        if stop.event_cap is not None and events >= stop.event_cap:
            reason = StopReason.EVENT_CAP
            break
        total = tree.total
        if not total > 0.0:
            reason = StopReason.NO_MOVES
            break
        dt = rng.exponential(total)
        if stop.time_cap is not None and clock.value + dt > stop.time_cap:
            tail = stop.time_cap - clock.value
            clock.add(tail)
            psi_duration += tail
            reason = StopReason.TIME_CAP
            break

        index = tree.find(rng.uniform() * total)
        site = index >> 1
        direction = 1 if index & 1 == 0 else -1
        bond_delta, spin_delta = flip_terms(sigma, site, direction)
        sigma.flip(site, direction, bond_delta - h * spin_delta)
        now = clock.add(dt)
        events += 1
        if record_events:
            traj.event_times.append(now)
            traj.event_sites.append(site)
            traj.event_dirs.append(direction)

        psi_duration += dt
        label_now = monochrome_spin(sigma)
        if label_now != psi_label:
            traj.psi_segments.append((psi_label, psi_duration))
            psi_label, psi_duration = label_now, 0.0

        _refresh_neighborhood(catalog, sigma, site)
        if valley is not None:
            tree.rebuild(_valley_mask(catalog.rates(), sigma, valley))

        if events % check_every == 0:
            verify_energy(sigma, p)
            catalog.verify(sigma)

        note_watch(now)
        label = stop.first_target(sigma)
        if label is not None:
            reason = StopReason.TARGET
            traj.hit_label, traj.hit_time = label, now

    traj.psi_segments.append((psi_label, psi_duration))
    traj.total_time = clock.value
    traj.event_count = events
    traj.stop_reason = reason
    traj.final = sigma
    return traj


def run_until(sigma0: SpinConfiguration, stop: StopCondition, p: ModelParams, rng: RngStream,
              record_events: bool = True, check_every: int = DEFAULT_CHECK_EVERY) -> Trajectory:
    """
    从 σ0 演化直到进入某个目标集合或达到上限

    目标只在跳跃之后检查 (两次跳跃之间构型不变)；
    上限耗尽是正常的停止原因。
    """
    return _simulate(sigma0, stop, p, rng, record_events, None, check_every)


def run_reflected(sigma0: SpinConfiguration, valley: Predicate, stop: StopCondition,
                  p: ModelParams, rng: RngStream, record_events: bool = True,
                  check_every: int = DEFAULT_CHECK_EVERY) -> Trajectory:
    """反射过程: 离开 valley 的翻转速率被置零"""
    if not valley(sigma0):
        raise ModelError("反射过程的初始构型必须位于谷内")
    return _simulate(sigma0, stop, p, rng, record_events, valley, check_every)


# ---------------------------------------------------------------------------
# 时间变换与迹过程

@dataclass
class TimeChange:
    """
    加性泛函 T_F(t) = ∫₀ᵗ χ_F(X_s)ds、其广义逆 S_F 以及 F 上的迹

    segments 为 [(状态, 是否在F内, 持续时间)]；
    trace 中连续访问同一状态的 F-逗留时间被合并。
    """
    segments: List[Tuple[object, bool, float]]
    trace: List[Tuple[object, float]]
    total_time: float
    occupied_time: float

    @property
    def empty(self) -> bool:
        return not self.trace

    def occupation(self, t: float) -> float:
        """T_F(t)"""
        elapsed, occupied = 0.0, 0.0
        for _, inside, duration in self.segments:
            if t <= elapsed + duration:
                return occupied + ((t - elapsed) if inside else 0.0)
            elapsed += duration
            if inside:
                occupied += duration
        return occupied

    def inverse(self, s: float) -> float:
        """S_F(s) = sup{t : T_F(t) ≤ s}"""
        elapsed, occupied = 0.0, 0.0
        for _, inside, duration in self.segments:
            if inside and occupied <= s < occupied + duration:
                return elapsed + (s - occupied)
            elapsed += duration
            if inside:
                occupied += duration
        return self.total_time

    def breakpoints(self) -> List[Tuple[float, float]]:
        """T_F 的分段线性折点 (t, T_F(t))"""
        points = [(0.0, 0.0)]
        elapsed, occupied = 0.0, 0.0
        for _, inside, duration in self.segments:
            elapsed += duration
            if inside:
                occupied += duration
            points.append((elapsed, occupied))
        return points


def time_change_from_segments(segments: Sequence[Tuple[object, bool, float]]) -> TimeChange:
    trace: List[List] = []
    total = 0.0
    occupied = 0.0
    for state, inside, duration in segments:
        total += duration
        if not inside:
            continue
        occupied += duration
        if trace and trace[-1][0] == state:
            trace[-1][1] += duration
        else:
            trace.append([state, duration])
    return TimeChange(
        segments=list(segments),
        trace=[(state, sojourn) for state, sojourn in trace],
        total_time=total,
        occupied_time=occupied,
    )


def trace_time_change(traj: Trajectory, member_F: Predicate,
                      key: Optional[Callable[[SpinConfiguration], object]] = None) -> TimeChange:
    """重放轨迹，计算 T_F、S_F 以及 F 上的迹轨迹"""
    key = key or SpinConfiguration.key
    segments = [(key(sigma), bool(member_F(sigma)), duration) for sigma, duration in traj.states()]
    return time_change_from_segments(segments)


# ---------------------------------------------------------------------------
# 轨迹导出格式

def export_trajectory(traj: Trajectory) -> str:
    traj._require_events()
    lines = [
        f"# bclab-trajectory L={traj.L} h={traj.h!r} beta={traj.beta!r} "
        f"seed={traj.seed} stream={traj.stream} "
        f"initial={encode_snapshot(traj.initial, traj.h).split()[2]}"
    ]
    for t, site, d in zip(traj.event_times, traj.event_sites, traj.event_dirs):
        lines.append(f"{t:.17g} {site} {'+' if d > 0 else '-'}")
    reason = traj.stop_reason.value if traj.stop_reason else "none"
    label = traj.hit_label if traj.hit_label is not None else "cap"
    lines.append(f"# stop reason={reason} label={label} time={traj.total_time:.17g} "
                 f"events={traj.event_count}")
    return "\n".join(lines) + "\n"


def _fields(line: str) -> Dict[str, str]:
    return dict(token.split("=", 1) for token in line[1:].split() if "=" in token)


def import_trajectory(text: str) -> Trajectory:
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) < 2 or not lines[0].startswith("# bclab-trajectory"):
        raise ModelError("不是 bclab 轨迹文件")
    head = _fields(lines[0])
    L = int(head["L"])
    initial, _ = decode_snapshot(f"{L} {head['h']} {head['initial']}")
    traj = Trajectory(initial=initial, L=L, h=float(head["h"]), beta=float(head["beta"]),
                      seed=int(head["seed"]), stream=int(head["stream"]))
    for line in lines[1:-1]:
        t, site, token = line.split()
        traj.event_times.append(float(t))
        traj.event_sites.append(int(site))
        traj.event_dirs.append(int(Direction.from_token(token)))
    tail = _fields(lines[-1])
    traj.stop_reason = None if tail["reason"] == "none" else StopReason(tail["reason"])
    traj.hit_label = None if tail["label"] == "cap" else tail["label"]
    traj.total_time = float(tail["time"])
    traj.event_count = int(tail["events"])
    if traj.stop_reason is StopReason.TARGET:
        traj.hit_time = traj.event_times[-1] if traj.event_times else 0.0
    traj.final = traj.replay()
    return traj


# 使用示例
if __name__ == "__main__":
    params = ModelParams.create(L=4, h=0.9, beta=1.0)
    start = SpinConfiguration.uniform(params.lattice, -1)
    condition = StopCondition(event_cap=20)
    result = run_until(start, condition, params, RngStream(seed=7))
    print(f"事件数 {result.event_count}，总时间 {result.total_time:.4f}，停止原因 {result.stop_reason}")
