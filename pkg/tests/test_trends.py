#!/usr/bin/env python3
"""
统计趋势测试（耗时较长）

在基准场景上以大量试验复现定性趋势：IAB 优于纯宏基站、MBS 关联概率随 P_MBS 上升、
θ 随基站数量增加、θ 随主瓣增益近似线性增长。

默认跳过，设置 IAB_RUN_SLOW=1 后运行；IAB_TREND_TRIALS 可调整每点试验数（默认 1000）。
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math
import unittest

from config import parse_config
from experiment_harness import antenna_sweep, compare_iab_macro, linear_fit, sweep
from testkit import run_tests


def slow_scenario():
    if os.environ.get('IAB_RUN_SLOW') != '1':
        raise unittest.SkipTest("设置 IAB_RUN_SLOW=1 后运行")
    trials = int(os.environ.get('IAB_TREND_TRIALS', '1000'))
    return parse_config().with_override('experiment.trials', trials) \
        .with_override('experiment.workers', os.cpu_count() or 1)


def combined(a, b):
    return math.hypot(a.stderr_theta or 0.0, b.stderr_theta or 0.0)


def not_lower(before, after):
    """after 不低于 before，或差距在两倍合成标准误之内"""
    return after.mean_theta >= before.mean_theta - 2 * combined(before, after)


def test_iab_beats_macro_only():
    """P_MBS=40 dBm 时 IAB 的平均 θ 高于纯宏基站，交叉点（若有）不早于 P_SBS+15 dB"""
    scenario = slow_scenario()
    report = compare_iab_macro(scenario, [30.0, 40.0, 50.0, 60.0])
    iab, macro = report.iab[1], report.macro[1]
    assert iab.mean_theta - macro.mean_theta > 2 * combined(iab, macro), (iab, macro)
    if report.crossover_p_mbs_dbm is not None:
        assert report.crossover_p_mbs_dbm - scenario.p_sbs_dbm >= 15.0, report.crossover_p_mbs_dbm
    for stats in report.iab + report.macro:
        assert stats.trials_failed < 0.001 * scenario.trials + 1


def test_mbs_association_grows_with_power():
    """MBS 关联概率随 P_MBS 不下降，R=8 时低于 R=2"""
    scenario = slow_scenario()
    stats = sweep(scenario, 'power.p_mbs_dbm', [30.0, 40.0, 50.0, 60.0])
    users = scenario.trials * scenario.deployment.num_users
    for before, after in zip(stats, stats[1:]):
        spread = math.sqrt(max(before.mbs_assoc_prob * (1 - before.mbs_assoc_prob), 1e-12) / users)
        assert after.mbs_assoc_prob >= before.mbs_assoc_prob - 2 * math.sqrt(2) * spread, (before, after)

    dense = sweep(scenario.with_override('deployment.num_sbs', 8), 'power.p_mbs_dbm', [40.0])[0]
    assert dense.mbs_assoc_prob < stats[1].mbs_assoc_prob


def test_theta_grows_with_base_stations():
    """θ 随 SBS 数量（M=1）和 MBS 数量（R=4）不下降"""
    scenario = slow_scenario()
    by_sbs = sweep(scenario, 'deployment.num_sbs', [2, 4, 8])
    for before, after in zip(by_sbs, by_sbs[1:]):
        assert not_lower(before, after), (before, after)

    by_mbs = sweep(scenario.with_override('deployment.num_sbs', 4), 'deployment.num_mbs', [1, 2, 4])
    for before, after in zip(by_mbs, by_mbs[1:]):
        assert not_lower(before, after), (before, after)


def test_theta_linear_in_main_lobe_gain():
    """θ_t=30° 时平均 θ 对主瓣增益（dB）的线性拟合 R² >= 0.9，且窄波束优于宽波束"""
    scenario = slow_scenario()
    points = antenna_sweep(scenario, [5.0, 10.0, 15.0, 20.0], [30.0, 60.0])
    narrow = [p for p in points if p.beamwidth_tx_deg == 30.0]
    _, _, r2 = linear_fit([p.main_gain_tx_db for p in narrow], [p.stats.mean_theta for p in narrow])
    assert r2 >= 0.9, r2

    at_10 = {p.beamwidth_tx_deg: p.stats.mean_theta for p in points if p.main_gain_tx_db == 10.0}
    assert at_10[30.0] > at_10[60.0], at_10


if __name__ == '__main__':
    run_tests("统计趋势测试", globals())
