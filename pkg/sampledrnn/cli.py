"""
命令行界面模块

提供命令行参数解析和程序入口功能。
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .commands.builtin import build_manager, parse_seed_list
from .core.errors import SampledRNNError, StageError


def common_parser() -> argparse.ArgumentParser:
    """所有子命令共享的参数"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", "-c", help="实验配置名或配置文件路径")
    seeds = parser.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="单个随机种子")
    seeds.add_argument("--seeds", type=parse_seed_list, help="逗号分隔的随机种子，例如 0,1,2,3,4")
    parser.add_argument("--out", "-o", help="输出目录（覆盖配置中的 output_dir）")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="日志级别，默认为WARNING")
    return parser


def parse_args(argv: Optional[List[str]] = None):
    """解析命令行参数"""
    parser = argparse.ArgumentParser(
        prog="sampledrnn",
        description="SampledRNN - 无梯度下降的采样循环神经网络",
        epilog="使用 'sampledrnn list' 查看可用的实验配置和基准系统。"
    )
    parser.add_argument("--version", "-v", action="version", version=f"SampledRNN v{__version__}")
    manager = build_manager()
    manager.add_subparsers(parser, common_parser())
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None:
        args.seeds = [args.seed]
    return parser, manager, args


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码：成功0，参数或配置错误1，阶段失败2"""
    parser, manager, args = parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        manager.execute_command(args.command, args)
    except StageError as e:
        print(f"错误 [stage={e.stage}, seed={e.seed}]: {type(e.cause).__name__}: {e.cause}",
              file=sys.stderr)
        return 2
    except (SampledRNNError, ValueError, OSError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("程序被用户中断", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
