#!/usr/bin/env python3
"""
调度优化测试

测试调度列构造、受限主问题、定价、树上最大权匹配、最优性检验与列生成主循环
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from network_topology import NodeKind, topology_from_parents, user_weights
from schedule_optimizer import (
    Schedule, column_from_activation, initial_columns, max_weight_matching, optimality_gap, optimize,
    price_links, solve_restricted_lp, verify_schedule,
)
from testkit import run_tests

M, S, U = NodeKind.MBS, NodeKind.SBS, NodeKind.USER


def two_users():
    return topology_from_parents([M, U, U], {1: 0, 2: 0})


def relay_network():
    """链路 0: MBS0->SBS1，链路 1: MBS0->用户2，链路 2: SBS1->用户3"""
    return topology_from_parents([M, S, U, U], {1: 0, 2: 0, 3: 1})


def path_network():
    """三条边的路径 MBS0 -> SBS1 -> SBS2 -> 用户3"""
    return topology_from_parents([M, S, S, U], {1: 0, 2: 1, 3: 2}, degree_cap=1)


def star_network():
    """MBS0 带两个 SBS 子节点，另有一个用户挂在 SBS1 下"""
    return topology_from_parents([M, S, S, U], {1: 0, 2: 0, 3: 1})


# ========== 调度列 ==========

def test_column_from_activation():
    """净速率按 B_k/A_k 汇总，未激活链路贡献为 0"""
    topology = relay_network()
    caps = np.array([5.0, 3.0, 2.0])
    assert list(column_from_activation({0}, caps, topology).net_rate) == [5.0, 0.0, 0.0]
    assert list(column_from_activation({2}, caps, topology).net_rate) == [-2.0, 0.0, 2.0]
    assert list(column_from_activation({1, 2}, caps, topology).net_rate) == [-2.0, 3.0, 2.0]
    assert list(column_from_activation(set(), caps, topology).net_rate) == [0.0, 0.0, 0.0]


def test_column_rejects_non_matching():
    """共享节点的激活集合被拒绝"""
    try:
        column_from_activation({0, 2}, np.ones(3), relay_network())
    except ValueError:
        return
    raise AssertionError("没有抛出 ValueError")


def test_initial_columns():
    """初始列每列只激活一条链路"""
    topology = relay_network()
    columns = initial_columns(topology, np.array([5.0, 3.0, 2.0]))
    assert len(columns) == 3
    assert [sorted(c.activation) for c in columns] == [[0], [1], [2]]
    matrix = np.column_stack([c.net_rate for c in columns])
    assert np.count_nonzero(matrix) == 4


# ========== 受限主问题 ==========

def test_two_user_lp():
    """单 MBS 两用户：θ = 4/3，t = (1/3, 2/3)，对偶价格 p = (1/3, 2/3)，帧约束对偶为 -4/3"""
    topology = two_users()
    caps = np.array([4.0, 2.0])
    lp = solve_restricted_lp(initial_columns(topology, caps), user_weights(topology))
    assert abs(lp.theta - 4 / 3) < 1e-12
    assert np.allclose(lp.slot_durations, [1 / 3, 2 / 3], atol=1e-12)
    assert np.allclose(lp.duals, [1 / 3, 2 / 3, -4 / 3], atol=1e-12), lp.duals
    # 强对偶：p·g = 帧约束对偶 = 目标值 -θ
    assert abs(lp.frame_dual + lp.theta) < 1e-9


def test_equal_capacities():
    """K 个用户容量相同为 c 时 θ = c/K"""
    topology = topology_from_parents([M] + [U] * 5, {k: 0 for k in range(1, 6)})
    lp = solve_restricted_lp(initial_columns(topology, np.full(5, 7.0)), user_weights(topology))
    assert abs(lp.theta - 7.0 / 5) < 1e-12


def test_single_link():
    """只有一条链路时 θ = c，t = (1)"""
    topology = topology_from_parents([M, U], {1: 0})
    lp = solve_restricted_lp(initial_columns(topology, np.array([3.5])), user_weights(topology))
    assert abs(lp.theta - 3.5) < 1e-12
    assert np.allclose(lp.slot_durations, [1.0])


def test_lp_rejects_bad_weights():
    """权重全为 0 或为负时报错"""
    topology = two_users()
    columns = initial_columns(topology, np.array([4.0, 2.0]))
    for w in ([0.0, 0.0], [1.0, -1.0], [1.0]):
        try:
            solve_restricted_lp(columns, np.array(w))
        except ValueError:
            continue
        raise AssertionError(f"权重 {w} 没有被拒绝")


# ========== 定价与匹配 ==========

def test_price_links():
    """MBS 发射端的价格视为 0"""
    topology = relay_network()
    caps = np.array([2.0, 2.0, 4.0])
    assert np.all(price_links(np.zeros(4), caps, topology) == 0)
    weights = price_links(np.array([0.25, 0.5, 0.25, 0.0]), caps, topology)
    assert weights[1] == 1.0
    assert weights[0] == 0.5
    assert weights[2] == 0.0


def test_matching_on_path():
    """路径 (3, 5, 4) 的最大权匹配为首尾两条边，总权重 7"""
    activation, value = max_weight_matching([3.0, 5.0, 4.0], path_network())
    assert activation == frozenset({0, 2})
    assert value == 7.0


def test_matching_on_star():
    """星形 (5, 3) 只能选一条边"""
    activation, value = max_weight_matching([5.0, 3.0, 0.0], star_network())
    assert activation == frozenset({0})
    assert value == 5.0


def test_matching_ignores_non_positive():
    """权重全部 <= 0 时返回空匹配"""
    activation, value = max_weight_matching([-1.0, 0.0, -2.0], path_network())
    assert activation == frozenset()
    assert value == 0.0


def test_optimality_gap():
    """p=0、W*=0 时 η = -1"""
    assert optimality_gap(np.zeros(3), 0.0, np.array([0.0, 1.0])) == -1.0
    assert optimality_gap(np.array([0.5, 0.5, -1.0]), 1.0, np.array([1.0, 1.0])) == 0.0


# ========== 列生成 ==========

def test_optimize_two_users():
    """纯宏基站网络在两轮定价内收敛"""
    topology = two_users()
    result = optimize(topology, np.array([4.0, 2.0]))
    assert result.converged
    assert result.iterations <= 2
    assert abs(result.theta - 4 / 3) < 1e-12
    assert abs(result.schedule.total_duration - 1.0) < 1e-12


def test_optimize_uses_concurrent_links():
    """中继网络的最优调度需要同时激活两条链路，θ 从 1/3 提升到 1/2"""
    topology = relay_network()
    result = optimize(topology, np.ones(3))
    assert result.converged
    assert abs(result.theta - 0.5) < 1e-12, result.theta
    assert abs(result.theta_history[0] - 1 / 3) < 1e-12
    assert any(len(activation) == 2 for _, activation in result.schedule.slots)


def test_theta_history_monotone():
    """θ 在迭代中不下降，调度通过独立复核"""
    rng = np.random.default_rng(21)
    topology = topology_from_parents([M, S, S, U, U, U, U], {1: 0, 2: 1, 3: 0, 4: 1, 5: 2, 6: 2})
    caps = rng.uniform(1e8, 1e9, size=len(topology.links))
    result = optimize(topology, caps)
    assert result.converged
    history = result.theta_history
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(history, history[1:])), history
    report = verify_schedule(result.schedule, caps, user_weights(topology), topology)
    assert report.feasible
    assert report.theta_achieved >= result.theta - 1e-9 * result.theta


def test_max_iterations_flags_non_convergence():
    """达到迭代上限时返回当前解并标记未收敛"""
    result = optimize(relay_network(), np.ones(3), max_iterations=1)
    assert not result.converged
    assert result.theta >= 1 / 3 - 1e-12


def test_adding_sbs_never_hurts():
    """新链路容量为 0 时的 θ 不超过正常容量时的 θ"""
    topology = relay_network()
    full = optimize(topology, np.array([3.0, 2.0, 4.0])).theta
    zeroed = optimize(topology, np.array([0.0, 2.0, 0.0]), w=np.array([0.0, 1.0, 0.0])).theta
    with_sbs = optimize(topology, np.array([3.0, 2.0, 4.0]), w=np.array([0.0, 1.0, 0.0])).theta
    assert zeroed <= with_sbs + 1e-12
    assert full > 0


def test_unserved_user_gives_positive_zero():
    """有用户容量为 0 时 θ 为 +0.0，不会写出 -0.0"""
    topology = two_users()
    caps = np.array([0.0, 2.0])
    lp = solve_restricted_lp(initial_columns(topology, caps), user_weights(topology))
    result = optimize(topology, caps)
    for theta in (lp.theta, result.theta):
        assert theta == 0.0
        assert not np.signbit(theta)


def test_column_builder():
    """按激活集合返回常数容量时结果与默认一致"""
    topology = relay_network()
    caps = np.array([3.0, 2.0, 4.0])
    default = optimize(topology, caps)
    custom = optimize(topology, caps, column_builder=lambda activation: caps)
    assert abs(default.theta - custom.theta) < 1e-12


def test_optimize_argument_checks():
    """容差与迭代上限必须为正"""
    for kwargs in ({'tolerance': 0.0}, {'max_iterations': 0}):
        try:
            optimize(two_users(), np.array([4.0, 2.0]), **kwargs)
        except ValueError:
            continue
        raise AssertionError(f"{kwargs} 没有被拒绝")


# ========== 调度复核 ==========

def test_verify_hand_built_schedule():
    """手工调度 t=(1/3, 2/3)、c=(4, 2) 的 θ 为 4/3"""
    topology = two_users()
    schedule = Schedule(((1 / 3, frozenset({0})), (2 / 3, frozenset({1}))))
    report = verify_schedule(schedule, np.array([4.0, 2.0]), user_weights(topology), topology)
    assert report.feasible
    assert abs(report.theta_achieved - 4 / 3) < 1e-12
    assert abs(report.per_node_throughput[1] - 4 / 3) < 1e-12


def test_verify_rejects_short_frame():
    """时隙长度之和为 0.9 时报错"""
    topology = two_users()
    schedule = Schedule(((0.4, frozenset({0})), (0.5, frozenset({1}))))
    try:
        verify_schedule(schedule, np.array([4.0, 2.0]), user_weights(topology), topology)
    except ValueError:
        return
    raise AssertionError("没有抛出 ValueError")


def test_verify_flags_invalid_activation():
    """激活集合不是匹配时报告不可行"""
    topology = relay_network()
    schedule = Schedule(((0.5, frozenset({0, 2})), (0.5, frozenset({1}))))
    report = verify_schedule(schedule, np.ones(3), user_weights(topology), topology)
    assert not report.feasible
    assert report.violations


def test_verify_flags_negative_relay_flow():
    """SBS 转发多于接收时报告不可行"""
    topology = relay_network()
    schedule = Schedule(((0.5, frozenset({1, 2})), (0.5, frozenset({1}))))
    report = verify_schedule(schedule, np.ones(3), user_weights(topology), topology)
    assert not report.feasible


if __name__ == '__main__':
    run_tests("调度优化测试", globals())
