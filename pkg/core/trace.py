#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/trace.py
迹分析 - 投影 Ψ、M 上的迹、经验跳跃速率与 M 外停留时间比例
"""

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from core.dynamics import (
    RngStream, TimeChange, Trajectory, monochrome_spin, time_change_from_segments,
)
from core.lattice import ModelError, SpinConfiguration
from core.statistics import poisson_rate_interval

CSV_COLUMNS = ("from", "to", "count", "sojourn_over_theta", "rate", "ci_lo", "ci_hi")


class ProjectionLabel(Enum):
    """Ψ 的取值: 三个单色基态或 d"""
    MINUS = "-1"
    ZERO = "0"
    PLUS = "+1"
    DELTA = "d"

    @classmethod
    def from_spin(cls, spin: Optional[int]) -> "ProjectionLabel":
        if spin is None:
            return cls.DELTA
        return {-1: cls.MINUS, 0: cls.ZERO, 1: cls.PLUS}[spin]

    @property
    def in_M(self) -> bool:
        return self is not ProjectionLabel.DELTA


M_LABELS = (ProjectionLabel.MINUS, ProjectionLabel.ZERO, ProjectionLabel.PLUS)

Segments = Sequence[Tuple[Optional[int], float]]


def project_psi(sigma: SpinConfiguration) -> ProjectionLabel:
    return ProjectionLabel.from_spin(monochrome_spin(sigma))


@dataclass
class TraceResult:
    """M 上的迹: 访问序列及每次访问在 M 时钟下的停留时间"""
    visits: List[Tuple[ProjectionLabel, float]]
    total_time: float
    outside_time: float
    time_change: TimeChange

    @property
    def empty(self) -> bool:
        return not self.visits

    @property
    def sequence(self) -> List[ProjectionLabel]:
        return [label for label, _ in self.visits]

    def transitions(self) -> Iterable[Tuple[ProjectionLabel, ProjectionLabel]]:
        for (a, _), (b, _) in zip(self.visits, self.visits[1:]):
            yield a, b

    def compact(self) -> List[List]:
        """可 JSON 序列化的访问序列 [[标签, 停留时间], ...]"""
        return [[label.value, duration] for label, duration in self.visits]

    @classmethod
    def from_visits(cls, visits: Sequence[Sequence], total_time: float,
                    outside_time: float) -> "TraceResult":
        """由 compact() 的结果重建；时间变换只包含 M 内的停留"""
        parsed = [(ProjectionLabel(label), float(duration)) for label, duration in visits]
        change = time_change_from_segments([(label, True, d) for label, d in parsed])
        return cls(parsed, total_time, outside_time, change)


def trace_from_segments(segments: Segments) -> TraceResult:
    """由 Ψ 游程 [(单色自旋或None, 持续时间)] 计算 M 上的迹"""
    change = time_change_from_segments(
        [(spin, spin is not None, duration) for spin, duration in segments])
    visits = [(ProjectionLabel.from_spin(spin), sojourn) for spin, sojourn in change.trace]
    return TraceResult(visits, change.total_time,
                       change.total_time - change.occupied_time, change)


def trace_on_M(traj: Union[Trajectory, Segments]) -> TraceResult:
    segments = traj.psi_segments if isinstance(traj, Trajectory) else traj
    return trace_from_segments(segments)


@dataclass
class RateEstimate:
    """有序对 (source, target) 的跳跃速率估计，时间以 θ_ref 为单位"""
    source: ProjectionLabel
    target: ProjectionLabel
    count: int
    sojourn_over_theta: float
    rate: float
    ci_lo: float
    ci_hi: float

    @property
    def undefined(self) -> bool:
        return not self.sojourn_over_theta > 0.0

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)

    @classmethod
    def from_counts(cls, source: ProjectionLabel, target: ProjectionLabel,
                    count: int, sojourn_over_theta: float) -> "RateEstimate":
        interval = poisson_rate_interval(count, sojourn_over_theta)
        return cls(source, target, count, sojourn_over_theta,
                   interval.estimate, interval.low, interval.high)


def empirical_jump_rates(traces: Iterable[TraceResult], theta_ref: float) -> List[RateEstimate]:
    """
    r̂(η,ξ) = #(η→ξ) / (η 的总停留时间 / θ_ref)

    被截断的最后一次停留也计入分母。
    """
    if not theta_ref > 0.0:
        raise ModelError(f"θ_ref 必须为正: {theta_ref}")
    counts: Dict[Tuple[ProjectionLabel, ProjectionLabel], int] = {}
    sojourn: Dict[ProjectionLabel, float] = {label: 0.0 for label in M_LABELS}
    for trace in traces:
        for label, duration in trace.visits:
            sojourn[label] += duration
        for pair in trace.transitions():
            counts[pair] = counts.get(pair, 0) + 1
    return [
        RateEstimate.from_counts(a, b, counts.get((a, b), 0), sojourn[a] / theta_ref)
        for a in M_LABELS for b in M_LABELS if a is not b
    ]


def merge_estimates(a: Sequence[RateEstimate], b: Sequence[RateEstimate]) -> List[RateEstimate]:
    """按 (source, target) 累加计数与停留时间后重新估计"""
    table: Dict[Tuple[ProjectionLabel, ProjectionLabel], List] = {}
    for estimate in list(a) + list(b):
        key = (estimate.source, estimate.target)
        entry = table.setdefault(key, [0, 0.0])
        entry[0] += estimate.count
        entry[1] += estimate.sojourn_over_theta
    return [RateEstimate.from_counts(s, t, count, exposure)
            for (s, t), (count, exposure) in table.items()]


def time_fraction_outside(traj: Union[Trajectory, Segments], window: float) -> float:
    """[0,T] 内 Ψ = d 的时间比例"""
    segments = traj.psi_segments if isinstance(traj, Trajectory) else traj
    total = sum(duration for _, duration in segments)
    if not window > 0.0:
        raise ModelError(f"时间窗必须为正: {window}")
    if window > total * (1.0 + 1e-12):
        raise ModelError(f"时间窗 {window} 超过轨迹时长 {total}")
    elapsed, outside = 0.0, 0.0
    for spin, duration in segments:
        if elapsed >= window:
            break
        part = min(duration, window - elapsed)
        if spin is None:
            outside += part
        elapsed += duration
    return outside / window


def rate_table_csv(estimates: Sequence[RateEstimate]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for e in estimates:
        writer.writerow([e.source.value, e.target.value, e.count, f"{e.sojourn_over_theta:.10g}",
                         f"{e.rate:.10g}", f"{e.ci_lo:.10g}", f"{e.ci_hi:.10g}"])
    return buffer.getvalue()


def sample_jump_chain(rates: Dict[Tuple[object, object], float], start: object,
                      horizon: float, rng: RngStream) -> List[Tuple[object, float]]:
    """
    小型连续时间链的直接采样，返回 [(状态, 停留时间)] 直到 horizon 或吸收
    """
    out: Dict[object, List[Tuple[object, float]]] = {}
    for (a, b), r in rates.items():
        if r > 0.0:
            out.setdefault(a, []).append((b, r))
    path = []
    state, now = start, 0.0
    while now < horizon:
        moves = out.get(state, [])
        total = sum(r for _, r in moves)
        if total <= 0.0:
            path.append((state, horizon - now))
            break
        dt = rng.exponential(total)
        if now + dt >= horizon:
            path.append((state, horizon - now))
            break
        path.append((state, dt))
        now += dt
        target = rng.uniform() * total
        for nxt, r in moves:
            if target < r:
                break
            target -= r
        state = nxt
    return path
