#!/usr/bin/env python3
"""
实验流程测试

测试单次试验、随机数流、统计汇总、CSV 输出、模式对比和天线扫描
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import io
import math
import tempfile

import numpy as np

from config import parse_config
from experiment_harness import (
    CrossoverReport, ExperimentRunner, TrialResult, aggregate_trials, antenna_sweep, compare_iab_macro,
    linear_fit, run_trial, simulate_trial, sweep, write_compare_csv, write_sweep_csv,
)
from network_topology import NodeKind, user_weights
from schedule_io import write_solution
from schedule_optimizer import verify_schedule
from testkit import run_tests


def small_scenario(**overrides):
    scenario = parse_config().with_override('experiment.trials', 3)
    for parameter, value in overrides.items():
        scenario = scenario.with_override(parameter.replace('__', '.'), value)
    return scenario


def user_positions(topology):
    return [n.position for n in topology.nodes if n.kind == NodeKind.USER]


def trial(theta, assoc=1, users=10, sbs=2, error=''):
    return TrialResult(0, 0, theta, not error, 3, assoc, users, sbs, 1.5, 1, error)


# ========== 单次试验 ==========

def test_trial_is_deterministic():
    """相同场景与种子得到逐位相同的 θ"""
    scenario = small_scenario()
    a = run_trial(scenario, 0, 1)
    b = run_trial(scenario, 0, 1)
    assert a.ok and a.theta > 0
    assert a.theta == b.theta
    assert run_trial(scenario, 0, 2).theta != a.theta


def test_macro_only_closed_form():
    """纯宏基站模式下 1000 次试验的 θ 都等于 1/Σ(1/c_k)"""
    scenario = small_scenario(experiment__mode='macro_only')
    worst = 0.0
    for trial_index in range(1000):
        outcome = simulate_trial(scenario, 0, trial_index)
        caps = outcome.realization.capacities
        expected = 1.0 / math.fsum(1.0 / c for c in caps)
        assert outcome.topology.num_sbs == 0
        assert outcome.result.converged
        worst = max(worst, abs(outcome.result.theta - expected) / expected)
    assert worst <= 1e-12, worst


def test_modes_share_user_positions():
    """IAB 与纯宏基站模式的用户位置相同"""
    iab = simulate_trial(small_scenario(), 3, 5)
    macro = simulate_trial(small_scenario(experiment__mode='macro_only'), 3, 5)
    assert user_positions(iab.topology) == user_positions(macro.topology)


def test_fixed_deployment():
    """固定部署时位置不变，信道每次重新生成"""
    scenario = small_scenario(experiment__fixed_deployment=True)
    a = simulate_trial(scenario, 0, 0)
    b = simulate_trial(scenario, 0, 1)
    assert [n.position for n in a.topology.nodes] == [n.position for n in b.topology.nodes]
    assert not np.array_equal(a.realization.capacities, b.realization.capacities)


def test_schedule_passes_verification():
    """默认场景（按激活集合计算干扰）的调度通过独立复核"""
    outcome = simulate_trial(small_scenario(), 0, 0)
    topology, result = outcome.topology, outcome.result
    assert result.converged
    assert result.theta > 0
    report = verify_schedule(result.schedule, outcome.realization.capacities, user_weights(topology),
                             topology, column_builder=outcome.realization.activation_capacities)
    assert report.feasible
    assert report.theta_achieved >= result.theta * (1 - 1e-9)


def test_conservative_mode():
    """保守容量下的调度按保守容量复核，单链路时隙的容量不低于保守容量"""
    scenario = small_scenario(channel__capacity_mode='conservative')
    outcome = simulate_trial(scenario, 0, 0)
    topology, result = outcome.topology, outcome.result
    report = verify_schedule(result.schedule, outcome.realization.capacities, user_weights(topology), topology)
    assert result.converged
    assert report.feasible
    assert report.theta_achieved >= result.theta * (1 - 1e-9)
    single = [outcome.realization.activation_capacities({i})[i] for i in range(len(topology.links))]
    assert all(s >= c for s, c in zip(single, outcome.realization.capacities))


# ========== 统计汇总 ==========

def test_aggregate_statistics():
    """均值、标准误与 MBS 关联概率"""
    stats = aggregate_trials(40.0, [trial(1.0, assoc=2), trial(3.0, assoc=4)])
    assert stats.mean_theta == 2.0
    assert abs(stats.stderr_theta - 1.0) < 1e-15
    assert abs(stats.mbs_assoc_prob - 0.3) < 1e-15
    assert stats.trials_ok == 2 and stats.trials_failed == 0
    assert stats.idle_sbs_fraction == 0.5


def test_aggregate_excludes_failures():
    """失败的试验不进入 θ 统计，但计入失败数"""
    stats = aggregate_trials(1.0, [trial(2.0), trial(math.nan, assoc=0, error='LP 失败')])
    assert stats.mean_theta == 2.0
    assert stats.stderr_theta is None
    assert stats.trials_ok == 1 and stats.trials_failed == 1
    assert abs(stats.mbs_assoc_prob - 0.1) < 1e-15


def test_sweep_csv_format():
    """CSV 表头固定，浮点数为 %.17e，单次试验的标准误写作 nan"""
    stream = io.StringIO()
    write_sweep_csv([aggregate_trials(40.0, [trial(2.5)])], stream)
    lines = stream.getvalue().splitlines()
    assert lines[0] == 'sweep_value,mean_theta_bps,stderr_theta_bps,mbs_assoc_prob,trials_ok,trials_failed'
    fields = lines[1].split(',')
    assert fields[0] == '4.00000000000000000e+01'
    assert fields[1] == '2.50000000000000000e+00'
    assert fields[2] == 'nan'
    assert fields[4:] == ['1', '0']
    assert len(lines) == 2


def test_extended_columns():
    """扩展列追加在末尾"""
    stream = io.StringIO()
    write_sweep_csv([aggregate_trials(1.0, [trial(1.0)])], stream, extended=True)
    header = stream.getvalue().splitlines()[0].split(',')
    assert header[-2:] == ['mean_user_hops', 'idle_sbs_fraction']


def test_compare_csv_crossover_line():
    """对比 CSV 以 mode 列开头，末行给出交叉点"""
    iab = (aggregate_trials(30.0, [trial(2.0)]), aggregate_trials(40.0, [trial(2.0)]))
    macro = (aggregate_trials(30.0, [trial(1.0)]), aggregate_trials(40.0, [trial(3.0)]))
    stream = io.StringIO()
    write_compare_csv(CrossoverReport((30.0, 40.0), iab, macro, 40.0), stream)
    lines = stream.getvalue().splitlines()
    assert lines[0].startswith('mode,sweep_value,')
    assert [line.split(',')[0] for line in lines[1:5]] == ['iab', 'iab', 'macro_only', 'macro_only']
    assert lines[-1] == '# crossover_p_mbs_dbm=4.00000000000000000e+01'

    stream = io.StringIO()
    write_compare_csv(CrossoverReport((30.0,), iab[:1], macro[:1], None), stream)
    assert stream.getvalue().splitlines()[-1] == '# crossover_p_mbs_dbm=none'


def test_linear_fit():
    """直线数据的斜率、截距与 R²"""
    slope, intercept, r2 = linear_fit([5, 10, 15, 20], [11, 21, 31, 41])
    assert abs(slope - 2.0) < 1e-12 and abs(intercept - 1.0) < 1e-9
    assert abs(r2 - 1.0) < 1e-12
    try:
        linear_fit([1.0], [1.0])
    except ValueError:
        return
    raise AssertionError("没有抛出 ValueError")


# ========== 扫描与对比 ==========

def test_sweep_points():
    """每个扫描点汇总全部试验"""
    stats = sweep(small_scenario(), 'power.p_sbs_dbm', [20.0, 30.0], workers=1)
    assert [s.sweep_value for s in stats] == [20.0, 30.0]
    assert all(s.trials_ok + s.trials_failed == 3 for s in stats)
    assert all(s.mean_theta > 0 for s in stats)


def test_sweep_requires_parameter():
    """没有扫描参数或取值时报错"""
    for args in ((None, [1.0]), ('power.p_sbs_dbm', [])):
        try:
            sweep(small_scenario(), *args)
        except ValueError:
            continue
        raise AssertionError(f"{args} 没有被拒绝")


def test_antenna_beamwidth_invariance():
    """单用户无干扰时 θ 与波束宽度无关，随主瓣增益增大"""
    scenario = small_scenario(deployment__num_sbs=0, deployment__num_users=1)
    points = antenna_sweep(scenario, [10.0, 20.0], [30.0, 60.0], workers=1)
    theta = {(p.main_gain_tx_db, p.beamwidth_tx_deg): p.stats.mean_theta for p in points}
    assert theta[(10.0, 30.0)] == theta[(10.0, 60.0)]
    assert theta[(20.0, 30.0)] > theta[(10.0, 30.0)]
    assert all(p.relative_gain == 1.0 for p in points if p.main_gain_tx_db == 10.0)


# ========== 运行器 ==========

def test_runner_single_and_verify():
    """单次试验写出的解文件可以复核通过"""
    runner = ExperimentRunner(small_scenario())
    solution = runner.single()
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, 'solution.txt')
        write_solution(solution, path)
        report, ok = runner.verify(path)
    assert ok, report.violations
    assert math.isclose(report.theta_achieved, solution.theta, rel_tol=1e-9)


def test_runner_oracle_check():
    """运行器使用场景参数执行一致性检查"""
    report = ExperimentRunner(small_scenario()).oracle_check(instances=5, max_links=6, seed=3)
    assert report.passed, report.failures
    assert report.instances == 5


# ========== 趋势冒烟 ==========

def test_default_scenario_trend_directions():
    """默认场景 300 次试验：P_MBS=40 dBm 时 IAB 高于纯宏基站，R=8 高于 R=2"""
    scenario = parse_config().with_override('experiment.trials', 300)
    workers = os.cpu_count() or 1
    report = compare_iab_macro(scenario, [40.0], workers)
    iab, macro = report.iab[0], report.macro[0]
    assert iab.trials_failed < 0.001 * scenario.trials + 1 and macro.trials_failed < 0.001 * scenario.trials + 1
    assert iab.mean_theta > macro.mean_theta, (iab, macro)

    dense = sweep(scenario, 'deployment.num_sbs', [2, 8], workers)
    assert dense[1].mean_theta > dense[0].mean_theta, dense


if __name__ == '__main__':
    run_tests("实验流程测试", globals())
