#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: scenarios/mc_scenarios.py
蒙特卡罗场景 - 临界液滴入口、亚稳路径、迹极限与超临界液滴去向
"""

import math
from typing import Dict, List, Sequence

import numpy as np

from core.config_loader import ExperimentConfig
from core.droplets import (
    ClassLabel, boundary_Bplus, classify, exit_slot_weights, in_Rl, make_rectangle, regime_report,
)
from core.dynamics import RngStream, StopCondition, Trajectory, run_until
from core.lattice import ModelParams, SpinConfiguration
from core.potential import theta_beta_asymptotic
from core.statistics import chi_square_uniformity, mean_interval
from core.trace import (
    ProjectionLabel, TraceResult, empirical_jump_rates, rate_table_csv, time_fraction_outside,
    trace_on_M,
)
from scenarios.base_scenario import (
    BaseScenario, RunRecord, ScenarioResult, SummaryRow, reference_beta,
)

RA_LABELS = (ClassLabel.RA_LC, ClassLabel.RA_LI, ClassLabel.RA_S)

# 超临界液滴去向与极限概率的允许偏差
FATE_TOLERANCE = 0.1


def _uniform(spin: int):
    return lambda sigma: sigma.is_uniform(spin)


def monochrome_targets(*spins: int):
    names = {-1: "-1", 0: "0", 1: "+1"}
    return [(names[s], _uniform(s)) for s in spins]


def make_record(traj: Trajectory, cfg: ExperimentConfig, beta: float, replica: int,
                phase: str, stream: int, exit_class: str = "", **extra) -> RunRecord:
    return RunRecord(
        replica=replica, seed=cfg.seed, stream=stream, beta=beta, phase=phase,
        stop_reason=traj.stop_reason.value if traj.stop_reason else "",
        hit_label=traj.hit_label or "cap",
        hitting_time=traj.hit_time if traj.hit_time is not None else traj.total_time,
        event_count=traj.event_count, exit_class=exit_class, extra=extra,
    )


class NucleationGateScenario(BaseScenario):
    """从 -1 出发首次进入 𝔅⁺ 的位置"""

    PHASES = ("gate",)

    def __init__(self):
        super().__init__("nucleation-gate", "临界液滴入口")
        self.description_cn = """
从全 -1 构型出发，记录首次进入 𝔅⁺ 时构型的类别；随后继续演化到
{0, +1, -1} 之一，并记录此前是否经过 Rˡ。
        """.strip()

    def replica(self, cfg: ExperimentConfig, beta: float, replica: int, phase: str,
                stream: int) -> RunRecord:
        p = cfg.params(beta)
        rng = RngStream(cfg.seed, stream)
        stop = StopCondition(targets=[("Bplus", lambda s: boundary_Bplus(s, p))],
                             time_cap=cfg.time_cap, event_cap=cfg.event_cap)
        gate = run_until(SpinConfiguration.uniform(p.lattice, -1), stop, p, rng, record_events=False)
        if gate.hit_label is None:
            return make_record(gate, cfg, beta, replica, phase, stream)

        exit_class = classify(gate.final, p).token
        follow = StopCondition(targets=monochrome_targets(0, 1, -1),
                               time_cap=cfg.time_cap, event_cap=cfg.event_cap,
                               watch=[("Rl", lambda s: in_Rl(s, p))])
        rest = run_until(gate.final, follow, p, rng, record_events=False)
        rl_time = rest.first_hits.get("Rl")
        continuation = rest.hit_label or "cap"
        rl_before = (rl_time is not None and rest.hit_time is not None and rl_time <= rest.hit_time)
        return make_record(gate, cfg, beta, replica, phase, stream, exit_class,
                           continuation=continuation, rl_before=rl_before,
                           continuation_events=rest.event_count)

    def run(self, cfg: ExperimentConfig, engine) -> ScenarioResult:
        result = ScenarioResult(self.name, cfg)
        ref = reference_beta(cfg)
        for index, beta in enumerate(sorted(cfg.beta_list)):
            p = cfg.params(beta)
            result.regimes.append(regime_report(p))
            records = engine.run_replicas(self, cfg, beta, index, "gate", 0)
            result.records.extend(records)
            result.rows.extend(self.summarize(records, p, beta == ref))
        result.rows.extend(self.trend_rows("ra_fraction", result.rows))
        return result

    def summarize(self, records: Sequence[RunRecord], p: ModelParams,
                  check_level: bool) -> List[SummaryRow]:
        beta = p.beta
        capped = sum(1 for r in records if r.capped)
        done = self.screen_capped(records)
        rows = [SummaryRow("capped", beta, capped)]
        n = len(done)
        tokens = [r.exit_class for r in done]
        ra_hits = sum(1 for t in tokens if t in {label.value for label in RA_LABELS})
        rows.append(self.proportion_row(
            "ra_fraction", beta, ra_hits, n,
            threshold=">= 0.9, ci_lo >= 0.85" if check_level else "",
            test=(lambda i: i.estimate >= 0.9 and i.low >= 0.85) if check_level else None))

        # 子类计数按贴附位置数归一后检验均匀性
        weights = exit_slot_weights(p.n0)
        counts = [tokens.count(label.value) for label in RA_LABELS]
        for label, count in zip(RA_LABELS, counts):
            rows.append(SummaryRow(f"subclass_{label.value}", beta, count / n if n else math.nan))
        if sum(counts) > 0:
            pvalue = chi_square_uniformity(counts, [weights[label].slots for label in RA_LABELS])
            rows.append(SummaryRow("subclass_uniformity_p", beta, pvalue,
                                   threshold="> 0.01", passed=pvalue > 0.01))

        grown = [r for r in done if r.extra.get("continuation") in ("0", "+1")]
        rows.append(self.proportion_row("rl_before_growth", beta,
                                        sum(1 for r in grown if r.extra.get("rl_before")), len(grown)))
        returned = sum(1 for r in done if r.extra.get("continuation") == "-1")
        rows.append(self.proportion_row("returned_to_minus", beta, returned, n))
        return rows


class RouteScenario(BaseScenario):
    """-1 → 0 → +1 的亚稳路径"""

    PHASES = ("minus", "zero")

    def __init__(self):
        super().__init__("route", "亚稳路径")
        self.description_cn = "从 -1 出发比较先到 0 还是先到 +1；从 0 出发比较先到 +1 还是先到 -1"

    def replica(self, cfg: ExperimentConfig, beta: float, replica: int, phase: str,
                stream: int) -> RunRecord:
        p = cfg.params(beta)
        rng = RngStream(cfg.seed, stream)
        if phase == "minus":
            start, targets = -1, monochrome_targets(0, 1)
        else:
            start, targets = 0, monochrome_targets(1, -1)
        stop = StopCondition(targets=targets, time_cap=cfg.time_cap, event_cap=cfg.event_cap)
        traj = run_until(SpinConfiguration.uniform(p.lattice, start), stop, p, rng, record_events=False)
        return make_record(traj, cfg, beta, replica, phase, stream)

    def run(self, cfg: ExperimentConfig, engine) -> ScenarioResult:
        result = ScenarioResult(self.name, cfg)
        ref = reference_beta(cfg)
        for index, beta in enumerate(sorted(cfg.beta_list)):
            result.regimes.append(regime_report(cfg.params(beta)))
            level = beta == ref

            minus = engine.run_replicas(self, cfg, beta, index, "minus", 0)
            zero = engine.run_replicas(self, cfg, beta, index, "zero", 1)
            result.records.extend(minus + zero)

            done = self.screen_capped(minus)
            result.rows.append(SummaryRow("capped_minus", beta, len(minus) - len(done)))
            result.rows.append(self.proportion_row(
                "zero_before_plus", beta, sum(1 for r in done if r.hit_label == "0"), len(done),
                threshold=">= 0.6" if level else "",
                test=(lambda i: i.estimate >= 0.6) if level else None))

            done = self.screen_capped(zero)
            result.rows.append(SummaryRow("capped_zero", beta, len(zero) - len(done)))
            result.rows.append(self.proportion_row(
                "plus_before_minus_from_zero", beta, sum(1 for r in done if r.hit_label == "+1"),
                len(done), threshold=">= 0.9" if level else "",
                test=(lambda i: i.estimate >= 0.9) if level else None))
        result.rows.extend(self.trend_rows("zero_before_plus", result.rows))
        return result


class TraceLimitScenario(BaseScenario):
    """-1 直到 +1 的轨迹在 M 上的迹与速率"""

    PHASES = ("trace",)

    def __init__(self):
        super().__init__("trace-limit", "迹过程极限")
        self.description_cn = """
从 -1 出发直到 +1，以 θ_β 的渐近式为时间单位估计迹过程在
{-1, 0, +1} 之间的跳跃速率，并统计 M 之外的停留时间比例。
        """.strip()

    def replica(self, cfg: ExperimentConfig, beta: float, replica: int, phase: str,
                stream: int) -> RunRecord:
        p = cfg.params(beta)
        rng = RngStream(cfg.seed, stream)
        stop = StopCondition(targets=monochrome_targets(1), time_cap=cfg.time_cap,
                             event_cap=cfg.event_cap, watch=monochrome_targets(0))
        traj = run_until(SpinConfiguration.uniform(p.lattice, -1), stop, p, rng, record_events=False)
        trace = trace_on_M(traj)
        outside = time_fraction_outside(traj, traj.total_time) if traj.total_time > 0 else 0.0
        return make_record(traj, cfg, beta, replica, phase, stream,
                           visits=trace.compact(), total_time=trace.total_time,
                           outside_time=trace.outside_time, fraction_outside=outside,
                           hit_zero=traj.first_hits.get("0"))

    def run(self, cfg: ExperimentConfig, engine) -> ScenarioResult:
        result = ScenarioResult(self.name, cfg)
        for index, beta in enumerate(sorted(cfg.beta_list)):
            p = cfg.params(beta)
            result.regimes.append(regime_report(p))
            records = engine.run_replicas(self, cfg, beta, index, "trace", 0)
            result.records.extend(records)
            rows, table = self.summarize(records, p)
            result.rows.extend(rows)
            result.tables[f"trace_beta{beta:g}.csv"] = table
        return result

    def summarize(self, records: Sequence[RunRecord], p: ModelParams):
        beta = p.beta
        theta = theta_beta_asymptotic(p)
        done = self.screen_capped(records)
        rows = [SummaryRow("capped", beta, len(records) - len(done)),
                SummaryRow("theta_ref", beta, theta)]
        traces = [TraceResult.from_visits(r.extra["visits"], r.extra["total_time"],
                                          r.extra["outside_time"]) for r in done]
        estimates = empirical_jump_rates(traces, theta)
        bounds: Dict[tuple, str] = {
            (ProjectionLabel.MINUS, ProjectionLabel.ZERO): "in",
            (ProjectionLabel.ZERO, ProjectionLabel.PLUS): "in",
            (ProjectionLabel.ZERO, ProjectionLabel.MINUS): "upper",
            (ProjectionLabel.MINUS, ProjectionLabel.PLUS): "upper",
        }
        for e in estimates:
            kind = bounds.get((e.source, e.target))
            threshold, passed = "", None
            if kind == "in":
                threshold, passed = "[0.5, 2]", (not e.undefined) and 0.5 <= e.rate <= 2.0
            elif kind == "upper":
                threshold, passed = "ci_hi <= 0.2", (not e.undefined) and e.ci_hi <= 0.2
            rows.append(SummaryRow(f"rate_{e.source.value}_{e.target.value}", beta, e.rate,
                                   e.ci_lo, e.ci_hi, threshold, passed))

        fractions = [r.extra["fraction_outside"] for r in done]
        median = float(np.median(fractions)) if fractions else math.nan
        rows.append(SummaryRow("median_fraction_outside", beta, median,
                               threshold="<= 0.05", passed=median <= 0.05))

        hits = [r.extra["hit_zero"] / theta for r in done if r.extra.get("hit_zero") is not None]
        if hits:
            interval = mean_interval(hits)
            rows.append(SummaryRow("mean_H0_over_theta", beta, interval.estimate, interval.low,
                                   interval.high, "[0.5, 2]", 0.5 <= interval.estimate <= 2.0))
        rows.append(self.proportion_row("visited_zero", beta, len(hits), len(done)))
        return rows, rate_table_csv(estimates)


class DropletFateScenario(BaseScenario):
    """超临界液滴 (Rᵃ 三个子类) 先回到 -1 还是先长成 0"""

    PHASES = ("Ra_lc", "Ra_li", "Ra_s")

    def __init__(self):
        super().__init__("droplet-fate", "超临界液滴去向")
        self.description_cn = "从 Rˡᶜ、Rˡⁱ、Rˢ 的代表构型出发演化到 M，与极限概率 1/2、1/3、1 比较"

    @staticmethod
    def representative(p: ModelParams, label: str) -> SpinConfiguration:
        """(n₀+1)×n₀ 的 0 矩形，突起贴在长边角上、长边内部或短边上"""
        n0 = p.n0
        anchor = p.lattice.site(1, 1)
        protuberance = {"Ra_lc": ("top", 0), "Ra_li": ("top", 1), "Ra_s": ("right", 0)}[label]
        return make_rectangle(p, anchor, n0 + 1, n0, protuberance=protuberance)

    def replica(self, cfg: ExperimentConfig, beta: float, replica: int, phase: str,
                stream: int) -> RunRecord:
        p = cfg.params(beta)
        rng = RngStream(cfg.seed, stream)
        stop = StopCondition(targets=monochrome_targets(-1, 0, 1),
                             time_cap=cfg.time_cap, event_cap=cfg.event_cap)
        traj = run_until(self.representative(p, phase), stop, p, rng, record_events=False)
        return make_record(traj, cfg, beta, replica, phase, stream, exit_class=phase)

    def run(self, cfg: ExperimentConfig, engine) -> ScenarioResult:
        result = ScenarioResult(self.name, cfg)
        for index, beta in enumerate(sorted(cfg.beta_list)):
            p = cfg.params(beta)
            result.regimes.append(regime_report(p))
            weights = exit_slot_weights(p.n0)
            slot_total = sum(w.slots for w in weights.values())
            mixed = 0.0
            for phase_index, phase in enumerate(self.PHASES):
                records = engine.run_replicas(self, cfg, beta, index, phase, phase_index)
                result.records.extend(records)
                done = self.screen_capped(records)
                expected = weights[ClassLabel(phase)].minus_first
                row = self.proportion_row(
                    f"minus_first_{phase}", beta, sum(1 for r in done if r.hit_label == "-1"),
                    len(done), threshold=f"{expected:.4g} ± {FATE_TOLERANCE}",
                    test=lambda i, e=expected: i.contains(e) or abs(i.estimate - e) <= FATE_TOLERANCE)
                result.rows.append(row)
                if done:
                    mixed += weights[ClassLabel(phase)].slots * (1.0 - row.value)
            result.rows.append(SummaryRow("zero_first_slot_average", beta, mixed / slot_total,
                                          threshold="1/3"))
        return result


MC_SCENARIOS = [NucleationGateScenario, RouteScenario, TraceLimitScenario, DropletFateScenario]


if __name__ == "__main__":
    # 使用示例
    cfg = ExperimentConfig(L=8, h=0.9, beta=2.5)
    p = cfg.params()
    for label in DropletFateScenario.PHASES:
        sigma = DropletFateScenario.representative(p, label)
        print(f"{label}: {classify(sigma, p).token}")
