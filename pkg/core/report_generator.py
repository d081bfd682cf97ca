#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/report_generator.py
报告生成器 - runs.jsonl、summary.csv、regime.csv、迹速率表以及 HTML/TXT 报告

summary.csv 只由配置与副本结果决定 (不含时间戳与耗时)，
同一配置与种子重复运行时逐字节相同。
"""

import csv
import io
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from jinja2 import Environment, FileSystemLoader, TemplateNotFound

from scenarios.base_scenario import ScenarioResult, SummaryRow

SUMMARY_COLUMNS = ("scenario", "config_hash", "L", "beta", "metric", "value",
                   "ci_lo", "ci_hi", "threshold", "passed", "holds")
REGIME_COLUMNS = ("config_hash", "L", "h", "beta", "n", "name", "log_value", "value", "satisfied")

_HTML_TEMPLATE = """<!DOCTYPE html>
<html lang="zh-CN">
<head>
<meta charset="utf-8">
<title>bclab 实验报告 - {{ scenario }}</title>
<style>
body { font-family: sans-serif; margin: 2em; color: #222; }
table { border-collapse: collapse; margin-bottom: 2em; }
th, td { border: 1px solid #bbb; padding: 4px 8px; text-align: right; }
th { background: #eee; }
td.metric { text-align: left; }
.pass { color: #1a7f37; } .fail { color: #cf222e; font-weight: bold; }
</style>
</head>
<body>
<h1>实验报告: {{ scenario }} ({{ scenario_cn }})</h1>
<p>配置哈希 <code>{{ config_hash }}</code> · 生成时间 {{ generated }} ·
{{ record_count }} 个副本 ·
{% if failures %}<span class="fail">{{ failures }} 项未通过</span>{% else %}<span class="pass">全部通过</span>{% endif %}</p>
<h2>配置</h2>
<table>{% for key, value in config.items() %}<tr><td class="metric">{{ key }}</td><td>{{ value }}</td></tr>{% endfor %}</table>
<h2>汇总</h2>
<table>
<tr>{% for column in summary_columns %}<th>{{ column }}</th>{% endfor %}</tr>
{% for row in summary %}<tr>
<td>{{ row.L }}</td><td>{{ row.beta }}</td><td class="metric">{{ row.metric }}</td>
<td>{{ row.value }}</td><td>{{ row.ci_lo }}</td><td>{{ row.ci_hi }}</td><td>{{ row.threshold }}</td>
<td class="{{ row.passed }}">{{ row.passed }}</td><td>{{ row.holds }}</td></tr>
{% endfor %}</table>
{% if regimes %}<h2>渐近条件</h2>
<table>
<tr><th>L</th><th>β</th><th>名称</th><th>log</th><th>值</th><th>满足</th></tr>
{% for row in regimes %}<tr><td>{{ row.L }}</td><td>{{ row.beta }}</td><td class="metric">{{ row.name }}</td>
<td>{{ row.log_value }}</td><td>{{ row.value }}</td><td>{{ row.satisfied }}</td></tr>
{% endfor %}</table>{% endif %}
{% if notes %}<h2>备注</h2><ul>{% for note in notes %}<li>{{ note }}</li>{% endfor %}</ul>{% endif %}
</body>
</html>
"""


def format_float(value: Optional[float]) -> str:
    """%.10g；None 与 NaN 写为空串"""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.10g}"


def format_passed(passed: Optional[bool]) -> str:
    if passed is None:
        return ""
    return "pass" if passed else "fail"


def format_holds(holds: Optional[bool]) -> str:
    """不参与判定的条件是否成立"""
    if holds is None:
        return ""
    return "yes" if holds else "no"


class ReportGenerator:
    """报告生成器主类"""

    def __init__(self, output_dir: Optional[Path] = None):
        self.template_dir = Path(__file__).parent.parent / "templates" / "reports"
        self.output_dir = Path(output_dir) if output_dir else Path("output") / "runs"
        self.jinja_env = Environment(loader=FileSystemLoader(str(self.template_dir)), autoescape=True)

    def write_all(self, result: ScenarioResult) -> Dict[str, Path]:
        """写出全部结果文件，返回 {名称: 路径}"""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "runs": self.write_runs(result),
            "summary": self.write_summary(result),
            "regime": self.write_regime(result),
        }
        for name, content in sorted(result.tables.items()):
            path = self.output_dir / name
            path.write_text(content, encoding="utf-8")
            paths[name] = path
        paths["html"] = self.generate_html_report(result)
        paths["text"] = self.generate_text_report(result)
        return paths

    def write_runs(self, result: ScenarioResult) -> Path:
        path = self.output_dir / "runs.jsonl"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for record in result.records:
                f.write(record.to_json() + "\n")
        return path

    def summary_lines(self, result: ScenarioResult) -> List[List[str]]:
        cfg = result.config
        digest = cfg.config_hash()
        lines = []
        for row in result.rows:
            lines.append([
                result.scenario, digest, str(row.L if row.L is not None else cfg.L),
                format_float(row.beta), row.metric, format_float(row.value),
                format_float(row.ci_lo), format_float(row.ci_hi), row.threshold,
                format_passed(row.passed), format_holds(row.holds),
            ])
        return lines

    def summary_csv(self, result: ScenarioResult) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(self.summary_lines(result))
        return buffer.getvalue()

    def write_summary(self, result: ScenarioResult) -> Path:
        path = self.output_dir / "summary.csv"
        path.write_text(self.summary_csv(result), encoding="utf-8")
        return path

    def regime_lines(self, result: ScenarioResult) -> List[List[str]]:
        digest = result.config.config_hash()
        lines = []
        for report in result.regimes:
            for name, log_value, value, satisfied in report.rows():
                lines.append([digest, str(report.L), format_float(report.h), format_float(report.beta),
                              str(report.n), name, format_float(log_value), format_float(value),
                              "" if satisfied is None else str(satisfied).lower()])
        return lines

    def write_regime(self, result: ScenarioResult) -> Path:
        path = self.output_dir / "regime.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REGIME_COLUMNS)
            writer.writerows(self.regime_lines(result))
        return path

    def _prepare_report_data(self, result: ScenarioResult, scenario_cn: str = "") -> Dict[str, Any]:
        summary = [dict(zip(SUMMARY_COLUMNS, line)) for line in self.summary_lines(result)]
        regimes = [dict(zip(REGIME_COLUMNS, line)) for line in self.regime_lines(result)]
        return {
            "scenario": result.scenario,
            "scenario_cn": scenario_cn,
            "config_hash": result.config.config_hash(),
            "config": result.config.to_dict(),
            "generated": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            "record_count": len(result.records),
            "failures": len(result.failures),
            "summary_columns": SUMMARY_COLUMNS[2:],
            "summary": summary,
            "regimes": regimes,
            "notes": result.notes,
        }

    def generate_html_report(self, result: ScenarioResult, scenario_cn: str = "") -> Path:
        """templates/reports/html_report.html 不存在时使用内置模板"""
        data = self._prepare_report_data(result, scenario_cn)
        try:
            template = self.jinja_env.get_template("html_report.html")
        except TemplateNotFound:
            template = self.jinja_env.from_string(_HTML_TEMPLATE)
        path = self.output_dir / "report.html"
        path.write_text(template.render(**data), encoding="utf-8")
        return path

    def generate_text_report(self, result: ScenarioResult) -> Path:
        path = self.output_dir / "report.txt"
        path.write_text(self._generate_text_content(result), encoding="utf-8")
        return path

    def _generate_text_content(self, result: ScenarioResult) -> str:
        lines = [
            "=" * 60,
            f"bclab 实验报告: {result.scenario}",
            "=" * 60,
            f"配置哈希: {result.config.config_hash()}",
            f"副本数: {len(result.records)}",
            "",
        ]
        width = max((len(row.metric) for row in result.rows), default=10)
        for row in result.rows:
            lines.append(self._text_row(row, width))
        failures = result.failures
        lines.append("")
        if failures:
            lines.append(f"❌ {len(failures)} 项未通过: " + ", ".join(r.metric for r in failures))
        else:
            lines.append("✅ 全部判定通过")
        lines.extend(f"📝 {note}" for note in result.notes)
        return "\n".join(lines) + "\n"

    @staticmethod
    def _text_row(row: SummaryRow, width: int) -> str:
        mark = {None: "  ", True: "✅", False: "❌"}[row.passed]
        beta = f"β={format_float(row.beta)}" if row.beta is not None else ""
        interval = ""
        if not math.isnan(row.ci_lo):
            interval = f" [{format_float(row.ci_lo)}, {format_float(row.ci_hi)}]"
        threshold = f"  ({row.threshold})" if row.threshold else ""
        return f"{mark} {row.metric:<{width}} {beta:>8} {format_float(row.value)}{interval}{threshold}"
