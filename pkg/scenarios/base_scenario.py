#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# base_scenario.py
"""
实验场景基类 - 所有实验场景的基础类
"""

import json
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from core.config_loader import ExperimentConfig
from core.droplets import RegimeReport
from core.lattice import BclabError
from core.statistics import Interval, wilson_interval

# 事件上限耗尽的副本可被剔除的最大比例
CAP_TOLERANCE = 0.02

# 不同 (β, 阶段) 的副本使用互不相交的流编号区间
STREAM_BLOCK = 1_000_000


class ExperimentError(BclabError, RuntimeError):
    """实验无法给出有效结果"""


def reference_beta(cfg: ExperimentConfig) -> float:
    """阈值判定所在的 β: cfg.beta 在扫描列表中时用它，否则用最大的 β"""
    betas = cfg.beta_list
    return cfg.beta if cfg.beta in betas else max(betas)


@dataclass
class RunRecord:
    """单个副本的运行记录"""
    replica: int
    seed: int
    stream: int
    beta: float
    phase: str
    stop_reason: str
    hit_label: str
    hitting_time: float
    event_count: int
    exit_class: str = ""
    wall_clock: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def capped(self) -> bool:
        return self.hit_label == "cap"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


@dataclass
class SummaryRow:
    """
    summary.csv 中的一行；passed 为 None 表示没有判定阈值

    holds 记录只作参考的条件是否成立，不影响 check_passed。
    """
    metric: str
    beta: Optional[float]
    value: float
    ci_lo: float = math.nan
    ci_hi: float = math.nan
    threshold: str = ""
    passed: Optional[bool] = None
    L: Optional[int] = None
    holds: Optional[bool] = None


@dataclass
class ScenarioResult:
    """一次实验的全部产出"""
    scenario: str
    config: ExperimentConfig
    records: List[RunRecord] = field(default_factory=list)
    rows: List[SummaryRow] = field(default_factory=list)
    regimes: List[RegimeReport] = field(default_factory=list)
    tables: Dict[str, str] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def failures(self) -> List[SummaryRow]:
        return [row for row in self.rows if row.passed is False]

    @property
    def check_passed(self) -> bool:
        return not self.failures


class BaseScenario(ABC):
    """
    场景基类 - 所有实验场景都必须继承此类

    蒙特卡罗场景实现 replica()，由引擎分发到工作进程；
    run() 负责组织各个 β 与阶段并汇总结果。
    """

    def __init__(self, name: str, name_cn: str, category: str = "蒙特卡罗"):
        self.name = name
        self.name_cn = name_cn
        self.category = category
        self.description_cn = ""
        self.requires_theorem_regime = True
        self.uses_replicas = True

    @abstractmethod
    def run(self, cfg: ExperimentConfig, engine) -> ScenarioResult:
        """执行实验并返回结果"""

    def replica(self, cfg: ExperimentConfig, beta: float, replica: int, phase: str,
                stream: int) -> RunRecord:
        raise NotImplementedError(f"场景 {self.name} 没有副本任务")

    def validate(self, cfg: ExperimentConfig):
        if self.requires_theorem_regime:
            for beta in cfg.beta_list:
                if not cfg.params(beta).theorem_regime:
                    raise ExperimentError(f"场景 {self.name} 要求 h < 1 (n₀ ≥ 2): h={cfg.h}")

    @staticmethod
    def stream_id(beta_index: int, phase_index: int, replica: int) -> int:
        return (beta_index * 8 + phase_index) * STREAM_BLOCK + replica

    @staticmethod
    def screen_capped(records: Sequence[RunRecord]) -> List[RunRecord]:
        """
        剔除事件上限耗尽的副本；超过 2% 时整个实验失败
        """
        capped = [r for r in records if r.capped]
        if len(capped) > CAP_TOLERANCE * len(records):
            raise ExperimentError(
                f"{len(capped)}/{len(records)} 个副本耗尽上限，超过 {CAP_TOLERANCE:.0%}，请提高 event_cap")
        return [r for r in records if not r.capped]

    @staticmethod
    def proportion_row(metric: str, beta: float, successes: int, trials: int,
                       threshold: str = "", test: Optional[Callable[[Interval], bool]] = None) -> SummaryRow:
        interval = wilson_interval(successes, trials)
        passed = test(interval) if test is not None else None
        return SummaryRow(metric, beta, interval.estimate, interval.low, interval.high, threshold, passed)

    @staticmethod
    def trend_rows(metric: str, rows: Sequence[SummaryRow]) -> List[SummaryRow]:
        """
        β 增大时不减: 相邻两点允许下降不超过两者置信区间半宽的较大者
        """
        ordered = sorted((r for r in rows if r.metric == metric), key=lambda r: r.beta)
        result = []
        for a, b in zip(ordered, ordered[1:]):
            slack = max(0.5 * (a.ci_hi - a.ci_lo), 0.5 * (b.ci_hi - b.ci_lo))
            result.append(SummaryRow(f"{metric}_trend", b.beta, b.value - a.value,
                                     threshold=f">= -{slack:.4g}", passed=b.value - a.value >= -slack))
        return result

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "name_cn": self.name_cn,
            "category": self.category,
            "description": self.description_cn,
        }

    def __str__(self) -> str:
        return f"{self.name} - {self.name_cn}"
