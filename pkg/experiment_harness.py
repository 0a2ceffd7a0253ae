"""
蒙特卡洛实验模块

实现仿真实验的驱动逻辑，包括：
- 单次试验：部署、回传森林、用户关联、信道实现、调度优化
- 参数扫描（MBS 功率、阻挡密度、基站数量等）与统计汇总
- IAB 与纯宏基站网络的对比（交叉点）
- 天线主瓣增益与波束宽度扫描
- CSV 输出（pandas，%.17e 全精度）

每次试验的随机数由 SeedSequence([base_seed, point_index, trial_index]) 派生出
SBS 位置、用户位置、信道三个独立的流，结果只取决于场景配置和种子。
"""

import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from logging.handlers import RotatingFileHandler
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import pandas as pd

from channel_model import ChannelRealization, realize_channel
from config import ScenarioConfig
from network_topology import (
    Topology, TopologyError, build_topology, generate_deployment, idle_sbs_count,
    mbs_association_count, mean_user_hops, user_weights,
)
from reference_oracle import OracleReport, run_oracle_suite
from revised_simplex import LPError
from schedule_io import SolutionFile, read_solution
from schedule_optimizer import OptimizationResult, ScheduleReport, optimize, verify_schedule


logger = logging.getLogger('IABSim.harness')

FLOAT_FORMAT = '%.17e'
SWEEP_COLUMNS = ['sweep_value', 'mean_theta_bps', 'stderr_theta_bps', 'mbs_assoc_prob',
                 'trials_ok', 'trials_failed']
EXTENDED_COLUMNS = ['mean_user_hops', 'idle_sbs_fraction']
ANTENNA_COLUMNS = ['main_gain_tx_db', 'beamwidth_tx_deg', 'mean_theta_bps', 'stderr_theta_bps',
                   'relative_gain', 'trials_ok', 'trials_failed']
DEFAULT_P_MBS_VALUES = (30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0)


@dataclass(frozen=True)
class TrialOutcome:
    """一次试验的完整中间结果"""
    topology: Topology
    realization: ChannelRealization
    result: OptimizationResult


@dataclass(frozen=True)
class TrialResult:
    """一次试验的汇总量"""
    point_index: int
    trial_index: int
    theta: float
    converged: bool
    iterations: int
    mbs_assoc_count: int
    num_users: int
    num_sbs: int
    mean_user_hops: float
    idle_sbs: int
    error: str = ''

    @property
    def ok(self) -> bool:
        return self.converged and not self.error


@dataclass(frozen=True)
class AggregateStats:
    """
    一个扫描点的统计量

    试验数少于 2 时 stderr_theta 为 None；没有成功试验时 mean_theta 为 None。
    """
    sweep_value: float
    mean_theta: Optional[float]
    stderr_theta: Optional[float]
    mbs_assoc_prob: float
    trials_ok: int
    trials_failed: int
    mean_user_hops: float
    idle_sbs_fraction: Optional[float]


@dataclass(frozen=True)
class CrossoverReport:
    p_mbs_values: Tuple[float, ...]
    iab: Tuple[AggregateStats, ...]
    macro: Tuple[AggregateStats, ...]
    crossover_p_mbs_dbm: Optional[float]


@dataclass(frozen=True)
class AntennaPoint:
    main_gain_tx_db: float
    beamwidth_tx_deg: float
    stats: AggregateStats
    relative_gain: Optional[float]


def trial_streams(scenario: ScenarioConfig, point_index: int, trial_index: int) -> Tuple[np.random.Generator, ...]:
    """
    派生 (SBS 位置, 用户位置, 信道) 三个随机数流

    固定部署模式下位置流只由 base_seed 决定，每次试验只重新生成信道。
    """
    sbs_seq, user_seq, channel_seq = np.random.SeedSequence(
        [scenario.base_seed, point_index, trial_index]).spawn(3)
    if scenario.fixed_deployment:
        sbs_seq, user_seq, _ = np.random.SeedSequence([scenario.base_seed]).spawn(3)
    return tuple(np.random.default_rng(s) for s in (sbs_seq, user_seq, channel_seq))


def simulate_trial(scenario: ScenarioConfig, point_index: int = 0, trial_index: int = 0) -> TrialOutcome:
    """
    执行一次试验并返回全部中间结果

    macro_only 模式下不部署 SBS（R=0），用户位置与 IAB 模式相同。

    Raises:
        TopologyError: 回传森林无法构建
        LPError: 线性规划求解失败
    """
    sbs_rng, user_rng, channel_rng = trial_streams(scenario, point_index, trial_index)
    deployment = scenario.deployment
    if scenario.mode == 'macro_only':
        deployment = replace(deployment, num_sbs=0)

    nodes = generate_deployment(deployment, sbs_rng, user_rng)
    topology = build_topology(nodes, scenario.channel, deployment.degree_cap, scenario.association_metric,
                              scenario.p_mbs_dbm, scenario.p_sbs_dbm)
    realization = realize_channel(topology, scenario.channel, scenario.antenna, channel_rng,
                                  scenario.p_mbs_dbm, scenario.p_sbs_dbm)
    builder = realization.activation_capacities if scenario.channel.capacity_mode == 'per_activation' else None
    result = optimize(topology, realization.capacities, user_weights(topology),
                      tolerance=scenario.tolerance, max_iterations=scenario.max_iterations,
                      column_builder=builder)
    return TrialOutcome(topology, realization, result)


def run_trial(scenario: ScenarioConfig, point_index: int, trial_index: int) -> TrialResult:
    """
    执行一次试验，求解失败或未收敛的试验会被标记

    Returns:
        TrialResult
    """
    deployment = scenario.deployment
    num_sbs = 0 if scenario.mode == 'macro_only' else deployment.num_sbs
    try:
        outcome = simulate_trial(scenario, point_index, trial_index)
    except (LPError, TopologyError) as e:
        logger.warning(f"试验 ({point_index}, {trial_index}) 失败: {e}")
        return TrialResult(point_index, trial_index, math.nan, False, 0, 0,
                           deployment.num_users, num_sbs, math.nan, 0, error=str(e))

    topology, result = outcome.topology, outcome.result
    if not result.converged:
        logger.warning(f"试验 ({point_index}, {trial_index}) 未收敛，θ={result.theta:.6e}")
    logger.debug(f"试验 ({point_index}, {trial_index}): θ={result.theta:.6e}, 迭代={result.iterations}")
    return TrialResult(
        point_index=point_index,
        trial_index=trial_index,
        theta=result.theta,
        converged=result.converged,
        iterations=result.iterations,
        mbs_assoc_count=mbs_association_count(topology),
        num_users=topology.num_users,
        num_sbs=topology.num_sbs,
        mean_user_hops=mean_user_hops(topology),
        idle_sbs=idle_sbs_count(topology),
    )


def _trial_task(args) -> TrialResult:
    return run_trial(*args)


def run_trials(scenario: ScenarioConfig, point_index: int,
               executor: Optional[ProcessPoolExecutor] = None, workers: int = 1) -> List[TrialResult]:
    """执行一个扫描点的全部试验，结果按试验编号排序"""
    tasks = [(scenario, point_index, t) for t in range(scenario.trials)]
    if executor is None:
        return [_trial_task(task) for task in tasks]
    chunksize = max(1, len(tasks) // (4 * workers))
    return list(executor.map(_trial_task, tasks, chunksize=chunksize))


def aggregate_trials(sweep_value: float, results: Sequence[TrialResult]) -> AggregateStats:
    """
    汇总一个扫描点

    θ 的均值与标准误只统计成功试验；MBS 关联概率与结构统计覆盖全部完成部署的试验。
    求和统一用 math.fsum，与试验顺序无关。
    """
    thetas = [r.theta for r in results if r.ok]
    n = len(thetas)
    mean = math.fsum(thetas) / n if n else None
    stderr = None
    if n >= 2:
        variance = math.fsum((x - mean) ** 2 for x in thetas) / (n - 1)
        stderr = math.sqrt(variance / n)

    deployed = [r for r in results if not r.error]
    users = math.fsum(r.num_users for r in deployed)
    assoc = math.fsum(r.mbs_assoc_count for r in deployed) / users if users else 0.0
    hops = math.fsum(r.mean_user_hops for r in deployed) / len(deployed) if deployed else math.nan
    sbs_total = math.fsum(r.num_sbs for r in deployed)
    idle = math.fsum(r.idle_sbs for r in deployed) / sbs_total if sbs_total else None

    return AggregateStats(
        sweep_value=float(sweep_value),
        mean_theta=mean,
        stderr_theta=stderr,
        mbs_assoc_prob=assoc,
        trials_ok=n,
        trials_failed=len(results) - n,
        mean_user_hops=hops,
        idle_sbs_fraction=idle,
    )


def _executor(workers: int) -> Optional[ProcessPoolExecutor]:
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else None


def sweep(scenario: ScenarioConfig, parameter: Optional[str] = None,
          values: Optional[Iterable[float]] = None, workers: Optional[int] = None) -> List[AggregateStats]:
    """
    参数扫描

    Args:
        scenario: 基准场景
        parameter: 扫描参数（'section.key'），缺省取 scenario.sweep_parameter
        values: 扫描取值，缺省取 scenario.sweep_values
        workers: 并行进程数，缺省取 scenario.workers

    Returns:
        每个扫描点一个 AggregateStats

    Raises:
        ValueError: 没有扫描参数或取值
    """
    parameter = parameter or scenario.sweep_parameter
    values = list(scenario.sweep_values if values is None else values)
    if not parameter or not values:
        raise ValueError("扫描需要 sweep.parameter 与非空的 sweep.values")
    workers = workers or scenario.workers

    executor = _executor(workers)
    try:
        stats = []
        for point_index, value in enumerate(values):
            point = scenario.with_override(parameter, value)
            results = run_trials(point, point_index, executor, workers)
            stats.append(aggregate_trials(value, results))
            logger.info(f"扫描 {parameter}={value}: 成功 {stats[-1].trials_ok}/{len(results)}, "
                        f"平均 θ={_display(stats[-1].mean_theta)}")
        return stats
    finally:
        if executor is not None:
            executor.shutdown()


def compare_iab_macro(scenario: ScenarioConfig, p_mbs_values: Iterable[float],
                      workers: Optional[int] = None) -> CrossoverReport:
    """
    在相同的 P_MBS 扫描上对比 IAB 与纯宏基站网络

    交叉点为第一个纯宏基站平均 θ 超过 IAB 平均 θ 的 P_MBS（没有则为 None）。
    """
    values = tuple(float(v) for v in p_mbs_values)
    if not values:
        raise ValueError("P_MBS 取值不能为空")
    iab = sweep(scenario.with_override('experiment.mode', 'iab'), 'power.p_mbs_dbm', values, workers)
    macro = sweep(scenario.with_override('experiment.mode', 'macro_only'), 'power.p_mbs_dbm', values, workers)

    crossover = None
    for value, a, b in zip(values, iab, macro):
        if a.mean_theta is not None and b.mean_theta is not None and b.mean_theta > a.mean_theta:
            crossover = value
            break
    logger.info(f"IAB 与纯宏基站对比完成，交叉点: {crossover if crossover is not None else '无'}")
    return CrossoverReport(values, tuple(iab), tuple(macro), crossover)


def antenna_sweep(scenario: ScenarioConfig, main_gain_values: Iterable[float],
                  beamwidth_values: Iterable[float], workers: Optional[int] = None) -> List[AntennaPoint]:
    """
    发射天线主瓣增益与波束宽度扫描

    接收天线与发射旁瓣增益保持不变。所有 (增益, 波束宽度) 组合使用相同的扫描点编号，
    即共享同一组部署与信道随机数。relative_gain 为相同波束宽度下相对最小增益的 θ 比值。
    """
    gains = [float(g) for g in main_gain_values]
    widths = [float(b) for b in beamwidth_values]
    if not gains or not widths:
        raise ValueError("主瓣增益和波束宽度取值不能为空")
    workers = workers or scenario.workers

    points = []
    executor = _executor(workers)
    try:
        for width in widths:
            base = None
            for gain in sorted(gains):
                point = scenario.with_override('antenna.beamwidth_tx_deg', width) \
                    .with_override('antenna.main_gain_tx_db', gain)
                stats = aggregate_trials(gain, run_trials(point, 0, executor, workers))
                if base is None:
                    base = stats.mean_theta
                relative = stats.mean_theta / base if stats.mean_theta is not None and base else None
                points.append(AntennaPoint(gain, width, stats, relative))
                logger.info(f"天线扫描 增益={gain} dB, 波束宽度={width}°: 平均 θ={_display(stats.mean_theta)}")
    finally:
        if executor is not None:
            executor.shutdown()
    return points


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """
    最小二乘直线拟合

    Returns:
        (斜率, 截距, 决定系数 R²)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("线性拟合至少需要两个点，且 x、y 长度相同")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = math.fsum(residual ** 2)
    ss_tot = math.fsum((y - y.mean()) ** 2)
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r_squared


def _display(value: Optional[float]) -> str:
    return 'NA' if value is None else f"{value:.6e}"


def _nan(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


def stats_frame(stats: Sequence[AggregateStats], extended: bool = False) -> pd.DataFrame:
    """扫描结果的 DataFrame，列顺序固定"""
    columns = SWEEP_COLUMNS + (EXTENDED_COLUMNS if extended else [])
    rows = [{
        'sweep_value': float(s.sweep_value),
        'mean_theta_bps': _nan(s.mean_theta),
        'stderr_theta_bps': _nan(s.stderr_theta),
        'mbs_assoc_prob': float(s.mbs_assoc_prob),
        'trials_ok': int(s.trials_ok),
        'trials_failed': int(s.trials_failed),
        'mean_user_hops': _nan(s.mean_user_hops),
        'idle_sbs_fraction': _nan(s.idle_sbs_fraction),
    } for s in stats]
    return pd.DataFrame(rows, columns=columns)


def _to_csv(df: pd.DataFrame, stream: TextIO):
    df.to_csv(stream, index=False, float_format=FLOAT_FORMAT, na_rep='nan', lineterminator='\n')


def write_sweep_csv(stats: Sequence[AggregateStats], stream: TextIO, extended: bool = False):
    _to_csv(stats_frame(stats, extended), stream)


def write_compare_csv(report: CrossoverReport, stream: TextIO, extended: bool = False):
    """两种模式的扫描结果（首列为 mode），末尾追加交叉点注释行"""
    iab = stats_frame(report.iab, extended)
    iab.insert(0, 'mode', 'iab')
    macro = stats_frame(report.macro, extended)
    macro.insert(0, 'mode', 'macro_only')
    _to_csv(pd.concat([iab, macro], ignore_index=True), stream)
    value = 'none' if report.crossover_p_mbs_dbm is None else FLOAT_FORMAT % report.crossover_p_mbs_dbm
    stream.write(f"# crossover_p_mbs_dbm={value}\n")


def write_antenna_csv(points: Sequence[AntennaPoint], stream: TextIO):
    rows = [{
        'main_gain_tx_db': float(p.main_gain_tx_db),
        'beamwidth_tx_deg': float(p.beamwidth_tx_deg),
        'mean_theta_bps': _nan(p.stats.mean_theta),
        'stderr_theta_bps': _nan(p.stats.stderr_theta),
        'relative_gain': _nan(p.relative_gain),
        'trials_ok': int(p.stats.trials_ok),
        'trials_failed': int(p.stats.trials_failed),
    } for p in points]
    _to_csv(pd.DataFrame(rows, columns=ANTENNA_COLUMNS), stream)


def build_solution(scenario: ScenarioConfig, outcome: TrialOutcome) -> SolutionFile:
    """把一次试验整理成可回放的解文件"""
    topology, result = outcome.topology, outcome.result
    summary = {
        'theta_bps': FLOAT_FORMAT % result.theta,
        'iterations': str(result.iterations),
        'converged': 'true' if result.converged else 'false',
        'num_columns': str(result.num_columns),
        'base_seed': str(scenario.base_seed),
        'mode': scenario.mode,
        'capacity_mode': scenario.channel.capacity_mode,
        'num_mbs': str(topology.num_mbs),
        'num_sbs': str(topology.num_sbs),
        'num_users': str(topology.num_users),
        'mbs_assoc_count': str(mbs_association_count(topology)),
    }
    activation_capacities = None
    if scenario.channel.capacity_mode == 'per_activation':
        activation_capacities = {activation: outcome.realization.activation_capacities(activation)
                                 for _, activation in result.schedule.slots}
    return SolutionFile(topology, outcome.realization.capacities, result.schedule, summary,
                        activation_capacities)


class ExperimentRunner:
    """
    实验运行器

    功能：
    1. 按配置初始化日志系统
    2. 执行单次试验、参数扫描、模式对比、天线扫描
    3. 运行参考实现一致性检查，复核解文件
    """

    def __init__(self, scenario: ScenarioConfig, workers: Optional[int] = None):
        """
        初始化实验运行器

        Args:
            scenario: 场景配置
            workers: 并行进程数，缺省取 experiment.workers
        """
        self.scenario = scenario
        self.workers = workers or scenario.workers
        self.logger = self._setup_logging()
        self.logger.debug(f"实验运行器已初始化: 模式={scenario.mode}, 试验数={scenario.trials}, "
                          f"种子={scenario.base_seed}, 进程数={self.workers}")

    def _setup_logging(self) -> logging.Logger:
        """
        配置日志系统

        Returns:
            logging.Logger: 配置好的日志记录器
        """
        settings = self.scenario.logging
        logger = logging.getLogger('IABSim')
        logger.setLevel(getattr(logging, settings['level']))

        # 清除已有的处理器
        logger.handlers.clear()

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        # 控制台处理器（stderr，stdout 留给 CSV 与解文件）
        if settings['console']:
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(formatter)
            logger.addHandler(console_handler)

        # 文件处理器
        log_file = settings['file']
        if log_file:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir, exist_ok=True)

            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=settings['max_bytes'],
                backupCount=settings['backup_count'],
                encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        if not logger.handlers:
            logger.addHandler(logging.NullHandler())
        return logger

    def single(self, point_index: int = 0, trial_index: int = 0) -> SolutionFile:
        outcome = simulate_trial(self.scenario, point_index, trial_index)
        result = outcome.result
        self.logger.info(f"单次试验完成: θ={result.theta:.6e} bit/s, 迭代={result.iterations}, "
                         f"时隙数={len(result.schedule.slots)}, 收敛={result.converged}")
        return build_solution(self.scenario, outcome)

    def sweep(self, parameter: Optional[str] = None, values: Optional[Iterable[float]] = None) -> List[AggregateStats]:
        return sweep(self.scenario, parameter, values, self.workers)

    def compare(self, p_mbs_values: Iterable[float]) -> CrossoverReport:
        return compare_iab_macro(self.scenario, p_mbs_values, self.workers)

    def antenna(self, main_gain_values: Iterable[float], beamwidth_values: Iterable[float]) -> List[AntennaPoint]:
        points = antenna_sweep(self.scenario, main_gain_values, beamwidth_values, self.workers)
        for width in sorted({p.beamwidth_tx_deg for p in points}):
            row = [p for p in points if p.beamwidth_tx_deg == width and p.stats.mean_theta is not None]
            if len(row) >= 2:
                slope, _, r2 = linear_fit([p.main_gain_tx_db for p in row], [p.stats.mean_theta for p in row])
                self.logger.info(f"波束宽度 {width}°: θ 对主瓣增益的斜率={slope:.6e} bit/s/dB, R²={r2:.4f}")
        return points

    def oracle_check(self, instances: int, max_links: int, seed: Optional[int] = None) -> OracleReport:
        seed = self.scenario.base_seed if seed is None else seed
        return run_oracle_suite(instances, max_links, seed, self.scenario, self.scenario.tolerance)

    def verify(self, path: str) -> Tuple[ScheduleReport, bool]:
        """
        复核解文件

        Returns:
            (复核报告, 是否通过)；通过要求调度可行且 θ 与记录值的相对误差不超过 1e-9
        """
        solution = read_solution(path)
        topology = solution.topology
        report = verify_schedule(solution.schedule, solution.capacities, user_weights(topology), topology,
                                 column_builder=solution.column_builder())
        recorded = solution.theta
        matches = math.isclose(report.theta_achieved, recorded, rel_tol=1e-9, abs_tol=0.0)
        for violation in report.violations:
            self.logger.error(violation)
        if not matches:
            self.logger.error(f"复核 θ={report.theta_achieved:.17e} 与记录值 {recorded:.17e} 不一致")
        self.logger.info(f"复核完成: θ={report.theta_achieved:.6e}, 可行={report.feasible}, 一致={matches}")
        return report, report.feasible and matches
