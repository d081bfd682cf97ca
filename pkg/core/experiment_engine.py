#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/experiment_engine.py
实验引擎 - 场景注册、预设模板、副本调度与结果汇总
"""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.config_loader import ConfigError, ExperimentConfig
from scenarios.base_scenario import BaseScenario, RunRecord, ScenarioResult

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent.parent / "templates"


def _registered_scenarios() -> List[BaseScenario]:
    from scenarios.exact_scenarios import EXACT_SCENARIOS
    from scenarios.mc_scenarios import MC_SCENARIOS

    return [cls() for cls in MC_SCENARIOS + EXACT_SCENARIOS]


def _run_replica(name: str, cfg_data: Dict[str, Any], beta: float, replica: int,
                 phase: str, stream: int) -> RunRecord:
    """工作进程入口: 按名称重建场景与配置后执行一个副本"""
    scenario = {s.name: s for s in _registered_scenarios()}[name]
    cfg = ExperimentConfig(**cfg_data)
    started = time.perf_counter()
    record = scenario.replica(cfg, beta, replica, phase, stream)
    record.wall_clock = time.perf_counter() - started
    return record


class ExperimentEngine:
    """实验引擎主类"""

    def __init__(self, templates_dir: Optional[Path] = None):
        self.scenarios: List[BaseScenario] = []
        self.templates: Dict[str, Dict[str, Any]] = {}
        self.templates_dir = Path(templates_dir) if templates_dir else TEMPLATES_DIR

        self._load_all_scenarios()
        self._load_templates()

    def _load_all_scenarios(self):
        self.scenarios = _registered_scenarios()
        logger.info("✅ 成功加载 %d 个实验场景", len(self.scenarios))

    def _load_templates(self):
        """加载 templates/*.json 预设"""
        if not self.templates_dir.exists():
            logger.warning("⚠️ 预设目录不存在: %s", self.templates_dir)
            return
        for template_file in sorted(self.templates_dir.glob("*.json")):
            try:
                with open(template_file, "r", encoding="utf-8") as f:
                    self.templates[template_file.stem] = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                logger.warning("⚠️ 加载预设失败 %s: %s", template_file, e)

    @property
    def scenario_names(self) -> List[str]:
        return [s.name for s in self.scenarios]

    def get_scenario(self, name: str) -> BaseScenario:
        for scenario in self.scenarios:
            if scenario.name == name:
                return scenario
        raise ConfigError(f"未知的实验场景: {name!r} (可选: {', '.join(self.scenario_names)})")

    def apply_template(self, template_name: str) -> Dict[str, Any]:
        """返回预设中的配置值"""
        if template_name not in self.templates:
            raise ConfigError(f"未找到预设: {template_name} (可选: {', '.join(sorted(self.templates))})")
        template = self.templates[template_name]
        values = dict(template.get("config", {}))
        logger.info("✅ 已应用预设: %s", template.get("name", template_name))
        return values

    def get_template_info(self, template_name: str) -> Optional[Dict[str, Any]]:
        template = self.templates.get(template_name)
        if not template:
            return None
        config = template.get("config", {})
        return {
            "name": template.get("name", template_name),
            "description": template.get("description", ""),
            "scenario": config.get("scenario", ""),
            "betas": config.get("betas") or [config.get("beta")],
            "replicas": config.get("replicas"),
        }

    def validate_scenarios(self) -> List[str]:
        """检查场景注册表与预设的完整性"""
        issues = []
        names = set()
        for scenario in self.scenarios:
            if scenario.name in names:
                issues.append(f"重复的场景名: {scenario.name}")
            names.add(scenario.name)
            if not scenario.name_cn:
                issues.append(f"场景 {scenario.name} 缺少中文名称")
            if not scenario.description_cn:
                issues.append(f"场景 {scenario.name} 缺少中文描述")
        for template_name, template in self.templates.items():
            scenario = template.get("config", {}).get("scenario")
            if scenario not in names:
                issues.append(f"预设 {template_name} 引用了未知场景: {scenario!r}")
        return issues

    def list_entries(self) -> Dict[str, List[Dict[str, Any]]]:
        return {
            "scenarios": [s.describe() for s in self.scenarios],
            "presets": [dict(self.get_template_info(name), key=name) for name in sorted(self.templates)],
        }

    def export_config(self, cfg: ExperimentConfig, config_path: Path):
        data = {"version": "1.0", "config_hash": cfg.config_hash(), "config": cfg.to_dict()}
        config_path = Path(config_path)
        config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(config_path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
        logger.info("✅ 配置已导出到: %s", config_path)

    def import_config(self, config_path: Path) -> ExperimentConfig:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"导入配置失败 {config_path}: {e}") from e
        cfg = ExperimentConfig().merge(data.get("config", {}))
        stored = data.get("config_hash")
        if stored and stored != cfg.config_hash():
            logger.warning("⚠️ 配置哈希不一致: 文件 %s, 重算 %s", stored, cfg.config_hash())
        logger.info("✅ 配置已从 %s 导入", config_path)
        return cfg

    def prepare(self, cfg: ExperimentConfig) -> BaseScenario:
        cfg.validate(self.scenario_names)
        scenario = self.get_scenario(cfg.scenario)
        scenario.validate(cfg)
        return scenario

    def run_replicas(self, scenario: BaseScenario, cfg: ExperimentConfig, beta: float,
                     beta_index: int, phase: str, phase_index: int,
                     count: Optional[int] = None) -> List[RunRecord]:
        """
        执行一组副本并按副本编号排序

        流编号只由 (β 序号, 阶段序号, 副本编号) 决定，与调度顺序无关。
        """
        count = cfg.replicas if count is None else count
        jobs = [(scenario.name, cfg.to_dict(), beta, r, phase,
                 scenario.stream_id(beta_index, phase_index, r)) for r in range(count)]
        logger.info("🔍 %s: β=%g 阶段 %s, %d 个副本, %d 个进程",
                    scenario.name, beta, phase, count, cfg.threads)
        if cfg.threads > 1 and count > 1:
            with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                futures = [pool.submit(_run_replica, *job) for job in jobs]
                records = [f.result() for f in futures]
        else:
            records = [_run_replica(*job) for job in jobs]
        records.sort(key=lambda r: r.replica)
        capped = sum(1 for r in records if r.capped)
        if capped:
            logger.warning("⚠️ %d/%d 个副本耗尽上限", capped, count)
        return records

    def run(self, cfg: ExperimentConfig) -> ScenarioResult:
        scenario = self.prepare(cfg)
        logger.info("🎯 开始实验 %s (配置哈希 %s)", scenario, cfg.config_hash())
        started = time.perf_counter()
        result = scenario.run(cfg, self)
        failures = len(result.failures)
        logger.info("📊 实验完成: %d 条汇总, %d 个副本, %d 项未通过, 用时 %.1fs",
                    len(result.rows), len(result.records), failures, time.perf_counter() - started)
        return result


if __name__ == "__main__":
    # 使用示例
    engine = ExperimentEngine()
    for entry in engine.list_entries()["scenarios"]:
        print(f"  {entry['name']:18s} {entry['name_cn']}")
    print(f"📝 可用预设: {', '.join(sorted(engine.templates))}")
