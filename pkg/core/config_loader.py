#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/config_loader.py
配置加载器 - 实验配置、key = value 配置文件与构型快照的读取

文件编码用 chardet 检测；配置来源按 默认值 → 预设模板 → 配置文件 →
命令行 → 环境变量 BCLAB_THREADS 的顺序依次覆盖。
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import chardet

from core.lattice import BclabError, ModelError, ModelParams, SpinConfiguration, decode_snapshot

THREADS_ENV = "BCLAB_THREADS"

# 不影响结果的键不参与配置哈希
_HASH_EXCLUDED = ("out", "threads", "check")


class ConfigError(BclabError, ValueError):
    """配置文件或配置值无效"""


@dataclass
class ExperimentConfig:
    """一次实验运行的全部参数"""
    scenario: str = ""
    L: int = 8
    h: float = 0.9
    beta: float = 4.5
    betas: List[float] = field(default_factory=list)
    sizes: List[int] = field(default_factory=list)
    replicas: int = 100
    seed: int = 20240617
    event_cap: int = 10 ** 9
    time_cap: Optional[float] = None
    out: str = "output/runs"
    threads: int = 1
    closure_cap: int = 50_000_000
    check: bool = False

    @property
    def beta_list(self) -> List[float]:
        return list(self.betas) if self.betas else [self.beta]

    @property
    def size_list(self) -> List[int]:
        return list(self.sizes) if self.sizes else [self.L]

    def params(self, beta: Optional[float] = None, L: Optional[int] = None) -> ModelParams:
        return ModelParams.create(L=L or self.L, h=self.h, beta=self.beta if beta is None else beta)

    def validate(self, known_scenarios: Optional[List[str]] = None):
        if known_scenarios is not None and self.scenario not in known_scenarios:
            raise ConfigError(f"未知的实验场景: {self.scenario!r} (可选: {', '.join(known_scenarios)})")
        if self.replicas < 1:
            raise ConfigError(f"副本数必须 ≥ 1: {self.replicas}")
        if self.event_cap is not None and self.event_cap < 1:
            raise ConfigError(f"事件上限必须为正: {self.event_cap}")
        if self.threads < 1:
            raise ConfigError(f"工作进程数必须 ≥ 1: {self.threads}")
        try:
            for L in self.size_list:
                for beta in self.beta_list:
                    self.params(beta, L)
        except ModelError as e:
            raise ConfigError(f"模型参数无效: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """规范化 JSON 的 SHA-256 前16位"""
        data = {k: v for k, v in self.to_dict().items() if k not in _HASH_EXCLUDED}
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def merge(self, values: Dict[str, Any]) -> "ExperimentConfig":
        """用 values 中非 None 的项覆盖，返回新配置"""
        current = self.to_dict()
        for key, value in values.items():
            if value is None:
                continue
            if key not in current:
                raise ConfigError(f"未知的配置键: {key!r}")
            current[key] = coerce_value(key, value)
        return ExperimentConfig(**current)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_LIST_KEYS = {"betas": float, "sizes": int}
_INT_KEYS = ("L", "replicas", "seed", "event_cap", "threads", "closure_cap")
_FLOAT_KEYS = ("h", "beta")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"无法解析的布尔值: {text!r}")


def coerce_value(key: str, value: Any) -> Any:
    """把字符串或 JSON 值转换为配置字段的类型"""
    try:
        if key in _LIST_KEYS:
            kind = _LIST_KEYS[key]
            if isinstance(value, str):
                parts = value.replace(",", " ").split()
            elif isinstance(value, (list, tuple)):
                parts = value
            else:
                parts = [value]
            return [kind(float(v)) if kind is int else kind(v) for v in parts]
        if key in _INT_KEYS:
            return int(float(value)) if isinstance(value, str) else int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key == "time_cap":
            if isinstance(value, str) and value.strip().lower() in ("", "none"):
                return None
            return float(value)
        if key == "check":
            return _parse_bool(value) if isinstance(value, str) else bool(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"配置键 {key!r} 的值无效: {value!r}") from e


class ConfigLoader:
    """配置与快照文件读取"""

    def detect_encoding(self, file_path: Path) -> str:
        try:
            with open(file_path, "rb") as f:
                result = chardet.detect(f.read())
                return result["encoding"] or "utf-8"
        except OSError:
            return "utf-8"

    def read_file_content(self, file_path: Path) -> str:
        file_path = Path(file_path)
        if not file_path.exists():
            raise ConfigError(f"文件不存在: {file_path}")
        encoding = self.detect_encoding(file_path)
        with open(file_path, "r", encoding=encoding) as f:
            return f.read()

    def parse_key_values(self, text: str) -> Dict[str, str]:
        """解析 key = value 行，# 之后为注释"""
        values = {}
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"第 {number} 行缺少 '=': {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _TYPES:
                raise ConfigError(f"第 {number} 行: 未知的配置键 {key!r}")
            values[key] = value
        return values

    def load_config_file(self, file_path: Path) -> Dict[str, Any]:
        raw = self.parse_key_values(self.read_file_content(file_path))
        return {key: coerce_value(key, value) for key, value in raw.items()}

    def read_snapshot(self, file_path: Path) -> Tuple[SpinConfiguration, float]:
        """快照文件的第一行非空内容"""
        for line in self.read_file_content(file_path).splitlines():
            if line.strip():
                return decode_snapshot(line.strip())
        raise ConfigError(f"快照文件为空: {file_path}")


def threads_from_env(default: int) -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return default
    try:
        threads = int(value)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} 必须为整数: {value!r}") from e
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} 必须 ≥ 1: {threads}")
    return threads


def build_config(preset: Optional[Dict[str, Any]] = None, config_path: Optional[Path] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 loader: Optional[ConfigLoader] = None) -> ExperimentConfig:
    """默认值 → 预设 → 配置文件 → 命令行 → 环境变量"""
    loader = loader or ConfigLoader()
    cfg = ExperimentConfig()
    if preset:
        cfg = cfg.merge(preset)
    if config_path is not None:
        cfg = cfg.merge(loader.load_config_file(config_path))
    if overrides:
        cfg = cfg.merge(overrides)
    cfg.threads = threads_from_env(cfg.threads)
    return cfg
