#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: main.py
bclab - 二维 Blume-Capel 模型亚稳态模拟与精确分析工具
主程序入口

用法:
  bclab <scenario> [--preset NAME] [--config PATH] [--beta B]... [--replicas N]
                   [--seed S] [--out DIR] [--check]

退出码: 0 成功；2 在 --check 下有判定未通过；1 运行出错。
"""

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

# 添加项目根目录到Python路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

VERSION = "1.0.0"

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_CHECK_FAILED = 2


def print_banner():
    banner = f"""
{'=' * 60}
🧊  bclab v{VERSION} - Blume-Capel 亚稳态实验工具
{'=' * 60}
拒绝式动力学模拟 · 临界液滴分类 · 谷内精确容量
{'=' * 60}
"""
    print(banner)


def check_dependencies() -> bool:
    """检查依赖包"""
    required_packages = [
        ("numpy", "numpy"),
        ("scipy", "scipy"),
        ("jinja2", "jinja2"),
        ("chardet", "chardet"),
    ]
    missing = []
    for module_name, package_name in required_packages:
        try:
            __import__(module_name)
        except ImportError:
            missing.append(package_name)
            print(f"  ❌ {package_name} (必需)")
    if missing:
        print(f"\n❌ 缺少必需依赖包: {', '.join(missing)}")
        print(f"📥 请运行: pip install {' '.join(missing)}")
        return False
    return True


def setup_logging(verbose: bool = False) -> logging.Logger:
    """设置日志: output/logs/bclab_YYYYMMDD.log 与控制台"""
    log_dir = project_root / "output" / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / f"bclab_{datetime.now().strftime('%Y%m%d')}.log"

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_file, encoding="utf-8"),
            logging.StreamHandler(),
        ],
        force=True,
    )
    return logging.getLogger("bclab")


def parse_arguments(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="bclab",
        description="bclab - Blume-Capel 亚稳态模拟与精确分析",
    )
    parser.add_argument("--version", "-v", action="version", version=f"bclab {VERSION}")
    parser.add_argument("scenario", nargs="?", help="实验场景名称 (见 --list)")
    parser.add_argument("--preset", "-p", type=str, help="预设名称 (templates/*.json)")
    parser.add_argument("--config", type=str, help="key = value 配置文件路径")
    parser.add_argument("--beta", type=float, action="append", help="逆温度，可重复给出以扫描多个 β")
    parser.add_argument("--L", type=int, dest="L", help="环面边长")
    parser.add_argument("--h", type=float, dest="h", help="外场")
    parser.add_argument("--replicas", type=int, help="副本数")
    parser.add_argument("--seed", type=int, help="基础种子")
    parser.add_argument("--out", type=str, help="输出目录")
    parser.add_argument("--event-cap", type=int, dest="event_cap", help="每个副本的事件上限")
    parser.add_argument("--time-cap", type=float, dest="time_cap", help="每个副本的时间上限")
    parser.add_argument("--check", action="store_true", help="有判定未通过时以退出码 2 结束")
    parser.add_argument("--list", action="store_true", help="列出场景与预设")
    parser.add_argument("--dry-run", action="store_true", help="只校验配置，不运行")
    parser.add_argument("--verbose", action="store_true", help="详细输出模式")
    return parser.parse_args(argv)


def cli_overrides(args: argparse.Namespace) -> dict:
    """命令行给出的配置值；单个 --beta 设置 beta，多个则设置 betas"""
    overrides = {
        "scenario": args.scenario,
        "L": args.L,
        "h": args.h,
        "replicas": args.replicas,
        "seed": args.seed,
        "out": args.out,
        "event_cap": args.event_cap,
        "time_cap": args.time_cap,
        "check": True if args.check else None,
    }
    if args.beta:
        if len(args.beta) == 1:
            overrides["beta"] = args.beta[0]
            overrides["betas"] = []
        else:
            overrides["betas"] = list(args.beta)
            overrides["beta"] = max(args.beta)
    return overrides


def print_listing(engine):
    entries = engine.list_entries()
    print("📋 实验场景:")
    for entry in entries["scenarios"]:
        print(f"  {entry['name']:18s} [{entry['category']}] {entry['name_cn']}")
    print("\n📋 预设:")
    for entry in entries["presets"]:
        print(f"  {entry['key']:18s} → {entry['scenario']:16s} {entry['name']}")


def print_cli_summary(result):
    print("\n" + "=" * 50)
    print(f"📊 {result.scenario} 结果摘要")
    print("=" * 50)
    checked = [row for row in result.rows if row.passed is not None]
    print(f"汇总条目: {len(result.rows)}，带判定: {len(checked)}，未通过: {len(result.failures)}")
    for row in result.failures:
        beta = f"β={row.beta:g} " if row.beta is not None else ""
        print(f"  ❌ {beta}{row.metric} = {row.value:.6g} (要求 {row.threshold})")
    for note in result.notes:
        print(f"  📝 {note}")


def run(args: argparse.Namespace, logger: logging.Logger) -> int:
    from core.config_loader import build_config
    from core.experiment_engine import ExperimentEngine
    from core.report_generator import ReportGenerator

    engine = ExperimentEngine()
    if args.list:
        print_listing(engine)
        return EXIT_OK

    preset = engine.apply_template(args.preset) if args.preset else None
    cfg = build_config(preset=preset, config_path=Path(args.config) if args.config else None,
                       overrides=cli_overrides(args))
    scenario = engine.prepare(cfg)
    logger.info("配置: %s (哈希 %s)", cfg.to_dict(), cfg.config_hash())

    if args.dry_run:
        print(f"✅ 配置有效: {scenario} · β={cfg.beta_list} · L={cfg.size_list} · 哈希 {cfg.config_hash()}")
        return EXIT_OK

    result = engine.run(cfg)
    reporter = ReportGenerator(Path(cfg.out))
    paths = reporter.write_all(result)
    print_cli_summary(result)
    print(f"\n✅ 结果已写入: {reporter.output_dir}")
    for name, path in paths.items():
        logger.info("输出 %s: %s", name, path)

    if cfg.check and not result.check_passed:
        print(f"❌ {len(result.failures)} 项判定未通过")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def main(argv=None) -> int:
    """主函数，返回退出码"""
    args = parse_arguments(argv)
    if not args.list and not args.scenario and not args.preset:
        print("❌ 需要指定实验场景或 --preset (用 --list 查看可选项)")
        return EXIT_FAULT

    print_banner()
    if not check_dependencies():
        return EXIT_FAULT
    logger = setup_logging(args.verbose)
    logger.info("bclab v%s 启动", VERSION)

    try:
        return run(args, logger)
    except KeyboardInterrupt:
        print("\n👋 用户取消操作")
        logger.info("用户中断程序")
        return EXIT_FAULT
    except Exception as e:
        print(f"❌ 程序执行失败: {e}")
        logger.error("运行失败: %s", e)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_FAULT
    finally:
        logger.info("程序结束")


if __name__ == "__main__":
    sys.exit(main())
