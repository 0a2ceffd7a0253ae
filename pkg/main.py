#!/usr/bin/env python3
"""
IAB 网络仿真主入口

提供命令行接口，支持：
- 单次试验并输出可回放的解文件
- 参数扫描、IAB/纯宏基站对比、天线扫描（CSV 输出）
- 参考实现一致性检查
- 解文件复核
- 生成默认配置文件
"""

import argparse
import contextlib
import logging
import os
import sys
from typing import List, Optional

from config import parse_config, save_default_config
from experiment_harness import (
    DEFAULT_P_MBS_VALUES, ExperimentRunner, write_antenna_csv, write_compare_csv, write_sweep_csv,
)


ACTIONS = ['single', 'sweep', 'compare', 'antenna', 'oracle-check', 'verify']

logger = logging.getLogger('IABSim.cli')


def parse_list(text: str) -> List[float]:
    """解析逗号分隔的数值列表"""
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析数值列表: {text}")
    if not values:
        raise argparse.ArgumentTypeError("数值列表不能为空")
    return values


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"不是整数: {text}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"必须 >= 1: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='IAB 网络仿真 - 毫米波接入回传一体化网络的最小吞吐量最大化调度',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  # 单次试验，输出解文件
  python main.py single --seed 42 --out solution.txt

  # 复核解文件
  python main.py verify --schedule solution.txt

  # 按配置文件扫描参数
  python main.py sweep --config config.yaml --threads 4 --out sweep.csv

  # IAB 与纯宏基站对比
  python main.py compare --p-mbs 30,40,50,60 --trials 200

  # 天线扫描
  python main.py antenna --gains 5,10,15,20 --beamwidths 30,60

  # 参考实现一致性检查
  python main.py oracle-check --instances 100 --max-links 8 --seed 7

  # 生成默认配置文件
  python main.py --generate-config config.yaml
"""
    )

    parser.add_argument('action', nargs='?', choices=ACTIONS, help='要执行的操作')
    parser.add_argument('--config', '-c', help='配置文件路径（默认使用内置基准场景）')
    parser.add_argument('--seed', type=int, help='覆盖 experiment.base_seed')
    parser.add_argument('--out', help='输出文件路径（默认: 标准输出）')
    parser.add_argument('--threads', type=positive_int, help='并行进程数（覆盖 experiment.workers）')
    parser.add_argument('--trials', type=positive_int, help='每个扫描点的试验数（覆盖 experiment.trials）')
    parser.add_argument('--instances', type=positive_int, default=100, help='oracle-check 实例数（默认: 100）')
    parser.add_argument('--max-links', type=positive_int, default=8, help='oracle-check 链路数上限（默认: 8）')
    parser.add_argument('--p-mbs', type=parse_list, help='compare 的 P_MBS 取值（dBm，逗号分隔）')
    parser.add_argument('--gains', type=parse_list, default=[5.0, 10.0, 15.0, 20.0],
                        help='antenna 的发射主瓣增益取值（dB，逗号分隔）')
    parser.add_argument('--beamwidths', type=parse_list, default=[30.0],
                        help='antenna 的发射波束宽度取值（度，逗号分隔）')
    parser.add_argument('--schedule', help='verify 读取的解文件')
    parser.add_argument('--extended', action='store_true', help='CSV 额外输出平均跳数与空闲 SBS 比例')
    parser.add_argument('--generate-config', metavar='FILE', help='生成默认配置文件到指定路径')
    return parser


@contextlib.contextmanager
def open_output(path: Optional[str]):
    if not path:
        yield sys.stdout
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        yield f


def compare_values(args, runner: ExperimentRunner) -> List[float]:
    if args.p_mbs:
        return args.p_mbs
    scenario = runner.scenario
    if scenario.sweep_parameter == 'power.p_mbs_dbm' and scenario.sweep_values:
        return [float(v) for v in scenario.sweep_values]
    return list(DEFAULT_P_MBS_VALUES)


def dispatch(args) -> int:
    """
    执行命令

    Returns:
        int: 退出码（0 表示成功）
    """
    if args.config and not os.path.exists(args.config):
        raise FileNotFoundError(f"配置文件不存在: {args.config}")
    scenario = parse_config(args.config)
    if args.seed is not None:
        scenario = scenario.with_override('experiment.base_seed', args.seed)
    if args.trials is not None:
        scenario = scenario.with_override('experiment.trials', args.trials)

    runner = ExperimentRunner(scenario, workers=args.threads)

    if args.action == 'single':
        solution = runner.single()
        with open_output(args.out) as out:
            out.write(solution.to_text())
        return 0

    if args.action == 'sweep':
        stats = runner.sweep()
        with open_output(args.out) as out:
            write_sweep_csv(stats, out, args.extended)
        return 0

    if args.action == 'compare':
        report = runner.compare(compare_values(args, runner))
        with open_output(args.out) as out:
            write_compare_csv(report, out, args.extended)
        return 0

    if args.action == 'antenna':
        points = runner.antenna(args.gains, args.beamwidths)
        with open_output(args.out) as out:
            write_antenna_csv(points, out)
        return 0

    if args.action == 'oracle-check':
        report = runner.oracle_check(args.instances, args.max_links, args.seed)
        with open_output(args.out) as out:
            out.write(report.summary() + '\n')
        return 0 if report.passed else 1

    if args.action == 'verify':
        if not args.schedule:
            raise ValueError("verify 需要 --schedule 指定解文件")
        report, ok = runner.verify(args.schedule)
        with open_output(args.out) as out:
            out.write(f"theta_achieved = {report.theta_achieved:.17e}\n")
            out.write(f"feasible = {'true' if report.feasible else 'false'}\n")
            out.write(f"verified = {'true' if ok else 'false'}\n")
        return 0 if ok else 1

    raise ValueError(f"未知操作: {args.action}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    主函数：解析命令行参数并执行相应操作
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    # 生成默认配置文件
    if args.generate_config:
        try:
            save_default_config(args.generate_config)
            print(f"默认配置已生成: {args.generate_config}", file=sys.stderr)
            return 0
        except Exception as e:
            print(f"生成配置文件失败: {e}", file=sys.stderr)
            return 1

    # 必须指定操作
    if not args.action:
        parser.print_help(sys.stderr)
        return 1

    try:
        return dispatch(args)
    except KeyboardInterrupt:
        print("已中断", file=sys.stderr)
        return 130
    except Exception as e:
        logger.debug("异常详情", exc_info=True)
        print(f"{args.action} 失败: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
