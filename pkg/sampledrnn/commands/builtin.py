"""
内置子命令

generate, fit, predict, evaluate, control, ablate, diagnose, ingest, list。
"""

import argparse
from dataclasses import replace
from pathlib import Path
from typing import Any, List, Optional

from ..core import experiment
from ..core.dynamics import write_dataset_csv
from ..core.embedding import DelayConfig
from ..core.errors import ConfigError
from ..core.ingest import CsvSchema, ingest_csv
from ..plugins.base import get_registry
from ..utils.config import CsvSettings, ExperimentConfig, list_configs, load_config
from .base import Command, CommandManager


def parse_seed_list(text: str) -> List[int]:
    """解析 "0,1,2" 形式的种子列表"""
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无效的种子列表: {text}")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """加载配置并应用命令行覆盖（--seed/--seeds, --out）"""
    if not args.config:
        raise ConfigError("需要通过 --config 指定实验配置")
    config = load_config(args.config)
    if args.seeds is not None:
        config = replace(config, seeds=list(args.seeds))
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    return config


def _print_summary(summary: experiment.RunSummary) -> None:
    print(f"{summary.name}: {summary.metric} 均值 {summary.mean:.4g} "
          f"(最小 {summary.min:.4g}, 最大 {summary.max:.4g})")
    for seed, value, seconds in zip(summary.seeds, summary.values, summary.fit_seconds):
        print(f"  种子 {seed}: {value:.4g}  拟合用时 {seconds:.3f}s")


class GenerateCommand(Command):
    name = "generate"
    description = "生成训练/验证/测试轨迹CSV"

    def execute(self, args):
        config = config_from_args(args)
        paths = experiment.generate_data(config)
        for split, path in paths.items():
            print(f"{split}: {path}")
        return paths


class FitCommand(Command):
    name = "fit"
    description = "逐个种子拟合模型并保存"

    def execute(self, args):
        config = config_from_args(args)
        record = experiment.fit_models(config)
        for seed, seconds, path in zip(record["seeds"], record["fit_seconds"], record["model_paths"]):
            print(f"种子 {seed}: {path}  拟合用时 {seconds:.3f}s")
        return record


class PredictCommand(Command):
    name = "predict"
    description = "加载已保存的模型并预测测试轨迹"

    def execute(self, args):
        config = config_from_args(args)
        paths = experiment.predict_models(config)
        for seed, path in paths.items():
            print(f"种子 {seed}: {path}")
        return paths


class EvaluateCommand(Command):
    name = "evaluate"
    description = "完整实验：拟合、预测、评分"
    aliases = ("run",)

    def execute(self, args):
        config = config_from_args(args)
        summary = experiment.run_experiment(config)
        _print_summary(summary)
        return summary


class ControlCommand(Command):
    name = "control"
    description = "LQR/MPC闭环控制实验"

    def execute(self, args):
        config = config_from_args(args)
        summary = experiment.run_control(config)
        for run in summary["runs"]:
            print(f"种子 {run['seed']}: 累计代价 {run['cumulative_cost']:.4g}  "
                  f"误差比 {run['final_error_ratio']:.3g}")
        print(f"平均累计代价: {summary['mean_cumulative_cost']:.4g}")
        return summary


class AblateCommand(Command):
    name = "ablate"
    description = "对比实验"

    def add_arguments(self, parser):
        parser.add_argument("--axis", required=True, choices=experiment.ABLATION_AXES,
                            help="对比维度")
        parser.add_argument("--values", help="逗号分隔的取值，默认使用该维度的预设取值")

    def execute(self, args):
        config = config_from_args(args)
        values: Optional[List[Any]] = None
        if args.values:
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            if args.axis == "width_sweep":
                values = [int(v) for v in values]
            elif args.axis == "dt_sweep":
                values = [float(v) for v in values]
        table, _ = experiment.run_ablation(config, args.axis, values)
        print(table.to_string(index=False))
        return table


class DiagnoseCommand(Command):
    name = "diagnose"
    description = "导出特征值和点对CSV"

    def execute(self, args):
        config = config_from_args(args)
        results = experiment.diagnose(config)
        for seed, paths in results.items():
            files = ", ".join(str(p) for p in paths.values()) or "无"
            print(f"种子 {seed}: {files}")
        return results


class IngestCommand(Command):
    name = "ingest"
    description = "导入通用CSV时间序列并切分"

    def add_arguments(self, parser):
        parser.add_argument("--csv", help="CSV文件路径（覆盖配置中的 csv.path）")
        parser.add_argument("--time-column", help="时间列名")
        parser.add_argument("--columns", help="逗号分隔的状态列")
        parser.add_argument("--inputs", help="逗号分隔的输入列")
        parser.add_argument("--delays", type=int, help="延迟窗口长度")
        parser.add_argument("--pca", type=int, help="PCA主成分个数")
        parser.add_argument("--no-normalize", action="store_true", help="不做 [-3, 3] 缩放")

    def execute(self, args):
        config = config_from_args(args) if args.config else ExperimentConfig(name="ingest")
        if args.out is not None:
            config = replace(config, output_dir=args.out)
        settings = config.csv or CsvSettings()
        if args.csv:
            settings = replace(settings, path=args.csv)
        if args.time_column:
            settings = replace(settings, time_column=args.time_column)
        if args.columns:
            settings = replace(settings, state_columns=args.columns.split(","))
        if args.inputs:
            settings = replace(settings, input_columns=args.inputs.split(","))
        if not settings.path:
            raise ConfigError("需要通过 --csv 或配置指定CSV文件")
        delay = DelayConfig(
            delays=args.delays if args.delays is not None else config.delay.delays,
            pca_components=args.pca if args.pca is not None else config.delay.pca_components,
        )
        schema = CsvSchema(time_column=settings.time_column,
                           state_columns=tuple(settings.state_columns),
                           input_columns=tuple(settings.input_columns),
                           granularities=tuple(settings.granularities),
                           splits=tuple(settings.splits))
        with experiment.stage("data"):
            result = ingest_csv(settings.path, schema, delay, normalize=not args.no_normalize)
        out = Path(config.out_dir) / "data"
        with experiment.stage("write"):
            for split in ("train", "validation", "test"):
                path = write_dataset_csv(result.split(split), out / f"{split}.csv",
                                         extra_meta=result.meta)
                print(f"{split}: {path} ({len(result.split(split).trajectories[0])} 行)")
        return result


class ListCommand(Command):
    name = "list"
    description = "列出可用的实验配置和基准系统"

    def execute(self, args):
        print("实验配置:")
        for name, source in list_configs().items():
            print(f"  {name} ({source})")
        print("基准系统:")
        for plugin in get_registry().get_all_plugins():
            print(f"  {plugin.name}: {plugin.description}")
        return None


BUILTIN_COMMANDS = (
    GenerateCommand, FitCommand, PredictCommand, EvaluateCommand, ControlCommand,
    AblateCommand, DiagnoseCommand, IngestCommand, ListCommand,
)


def build_manager() -> CommandManager:
    """注册所有内置命令"""
    manager = CommandManager()
    for command_class in BUILTIN_COMMANDS:
        manager.register_command(command_class())
    return manager
