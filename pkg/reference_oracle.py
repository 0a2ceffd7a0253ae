"""
参考实现（暴力求解）

在小规模实例上独立验证调度优化：
- 穷举所有匹配
- 以全部匹配为列一次性求解线性规划（与列生成共用单纯形内核，但不经过定价循环）
- 暴力最大权匹配
- 对偶可行性证书检查

规模上限为 20 条链路。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Tuple

import numpy as np

from channel_model import AntennaConfig, ChannelParams, realize_channel
from network_topology import (
    DeploymentConfig, NodeKind, Topology, build_topology, generate_deployment,
    topology_from_parents, user_weights,
)
from revised_simplex import LPError
from schedule_optimizer import (
    column_from_activation, max_weight_matching, optimize, solve_restricted_lp, verify_schedule,
)


logger = logging.getLogger('IABSim.oracle')

MAX_ORACLE_LINKS = 20


def _check_size(topology: Topology):
    if len(topology.links) > MAX_ORACLE_LINKS:
        raise ValueError(f"链路数 {len(topology.links)} 超过穷举上限 {MAX_ORACLE_LINKS}")


def enumerate_matchings(topology: Topology) -> List[FrozenSet[int]]:
    """
    穷举所有匹配（含空集）

    按链路编号递归地选择「不含 / 含」，与已选链路共享节点的分支直接剪掉。

    Raises:
        ValueError: 链路数超过上限
    """
    _check_size(topology)
    links = topology.links
    result = []

    def extend(index: int, chosen: Tuple[int, ...], used: FrozenSet[int]):
        if index == len(links):
            result.append(frozenset(chosen))
            return
        extend(index + 1, chosen, used)
        m, k = links[index]
        if m not in used and k not in used:
            extend(index + 1, chosen + (index,), used | {m, k})

    extend(0, (), frozenset())
    return result


def solve_full_lp(topology: Topology, capacities, w=None, tolerance: float = 1e-9) -> float:
    """
    以全部匹配为调度列求解 P0，返回 θ

    容量先按最大值归一化，结果再乘回。最小与最大容量之比低于单纯形容差
    （例如 1e-3 与 1e12）时，小容量链路在归一化后视为 0，θ 可能返回 0。
    """
    w = user_weights(topology) if w is None else np.asarray(w, dtype=float)
    caps = np.asarray(capacities, dtype=float)
    scale = float(caps.max()) if caps.size and caps.max() > 0 else 1.0
    columns = [column_from_activation(m, caps / scale, topology) for m in enumerate_matchings(topology)]
    return solve_restricted_lp(columns, w, tolerance).theta * scale


def brute_force_matching(weights, topology: Topology) -> Tuple[FrozenSet[int], float]:
    """
    暴力最大权匹配

    并列时选择链路编号序列字典序最小的集合。
    """
    weights = np.asarray(weights, dtype=float)
    best_set, best_value = frozenset(), 0.0
    for matching in enumerate_matchings(topology):
        value = math.fsum(weights[i] for i in matching)
        if value > best_value or (value == best_value and sorted(matching) < sorted(best_set)):
            best_set, best_value = matching, value
    return best_set, best_value


def dual_feasibility_check(duals, capacities, topology: Topology, w=None,
                           tolerance: float = 1e-8) -> bool:
    """
    对偶可行性证书

    检查每个匹配列、θ 列和每个剩余变量列的检验数都 >= -tolerance。
    调度列的检验数除以最大容量，与优化时的归一化一致。
    """
    p = np.asarray(duals, dtype=float)
    w = user_weights(topology) if w is None else np.asarray(w, dtype=float)
    caps = np.asarray(capacities, dtype=float)
    scale = float(caps.max()) if caps.size and caps.max() > 0 else 1.0
    node_p, frame_p = p[:-1], p[-1]

    for matching in enumerate_matchings(topology):
        net_rate = column_from_activation(matching, caps, topology).net_rate
        reduced = (-float(node_p @ net_rate) - frame_p) / scale
        if reduced < -tolerance:
            logger.debug(f"匹配 {sorted(matching)} 的检验数为 {reduced:.3e}")
            return False
    if -1.0 + float(node_p @ w) < -tolerance:
        return False
    return bool(np.all(node_p >= -tolerance))


def random_forest_topology(rng: np.random.Generator, num_mbs: int, num_sbs: int, num_users: int,
                           degree_cap: Optional[int] = None) -> Topology:
    """
    随机森林拓扑（不涉及几何）

    每个 SBS 连接到编号更小的某个基站，每个用户连接到任意基站。
    """
    kinds = [NodeKind.MBS] * num_mbs + [NodeKind.SBS] * num_sbs + [NodeKind.USER] * num_users
    num_bs = num_mbs + num_sbs
    parent = {}
    for s in range(num_mbs, num_bs):
        parent[s] = int(rng.integers(0, s))
    for u in range(num_bs, len(kinds)):
        parent[u] = int(rng.integers(0, num_bs))
    return topology_from_parents(kinds, parent, degree_cap=degree_cap)


@dataclass
class OracleReport:
    """oracle-check 的结果汇总"""
    instances: int = 0
    checks: int = 0
    failures: List[str] = field(default_factory=list)
    max_relative_error: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "通过" if self.passed else "失败"
        return (f"oracle-check {status}: 实例数={self.instances}, 检查项={self.checks}, "
                f"失败={len(self.failures)}, 最大相对误差={self.max_relative_error:.3e}")


def _instance_sizes(rng: np.random.Generator, max_links: int) -> Tuple[int, int]:
    num_sbs = int(rng.integers(0, min(3, max_links - 1) + 1))
    num_users = int(rng.integers(1, min(4, max_links - num_sbs) + 1))
    return num_sbs, num_users


def run_oracle_suite(instances: int = 100, max_links: int = 8, seed: int = 0, scenario=None,
                     tolerance: float = 1e-9) -> OracleReport:
    """
    随机小实例上的一致性检查

    每个实例（M=1，R∈0..3，K∈1..4，链路数不超过 max_links）走完整流程：
    部署、建树、关联、信道实现，然后比较：
    1. 列生成 θ 与全匹配 LP θ（相对误差 1e-9）
    2. 终止时对偶价格的可行性证书（容差 1e-8）
    3. 输出调度的独立复核
    4. 随机权重下动态规划匹配与暴力匹配的值完全相等

    Args:
        instances: 实例数
        max_links: 链路数上限
        seed: 随机种子
        scenario: 可选的 ScenarioConfig，提供信道、天线、功率和部署参数
        tolerance: 列生成的最优性容差
    """
    if instances < 1:
        raise ValueError("实例数必须 >= 1")
    if not (1 <= max_links <= MAX_ORACLE_LINKS):
        raise ValueError(f"max_links 必须在 1..{MAX_ORACLE_LINKS} 之间")

    if scenario is None:
        params, antenna = ChannelParams(), AntennaConfig()
        p_mbs, p_sbs, area, degree_cap, metric = 40.0, 30.0, 400.0, 2, 'rx_power'
    else:
        params, antenna = scenario.channel, scenario.antenna
        p_mbs, p_sbs = scenario.p_mbs_dbm, scenario.p_sbs_dbm
        area, degree_cap = scenario.deployment.area_side, scenario.deployment.degree_cap
        metric = scenario.association_metric

    report = OracleReport()
    for index in range(instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        num_sbs, num_users = _instance_sizes(rng, max_links)
        deployment = DeploymentConfig(area_side=area, num_mbs=1, num_sbs=num_sbs,
                                      num_users=num_users, degree_cap=degree_cap, mbs_layout='center')
        label = f"实例 {index} (R={num_sbs}, K={num_users})"
        try:
            nodes = generate_deployment(deployment, rng)
            topology = build_topology(nodes, params, degree_cap, metric, p_mbs, p_sbs)
            capacities = realize_channel(topology, params, antenna, rng, p_mbs, p_sbs).capacities
            w = user_weights(topology)

            result = optimize(topology, capacities, w, tolerance=tolerance)
            full_theta = solve_full_lp(topology, capacities, w, tolerance)
        except (LPError, ValueError) as e:
            report.failures.append(f"{label}: 求解失败: {e}")
            report.instances += 1
            continue

        report.instances += 1
        report.checks += 4

        error = abs(result.theta - full_theta) / full_theta if full_theta > 0 else abs(result.theta)
        report.max_relative_error = max(report.max_relative_error, error)
        if not result.converged or error > 1e-9:
            report.failures.append(
                f"{label}: 列生成 θ={result.theta:.17e} 与全匹配 θ={full_theta:.17e} 不一致 "
                f"(收敛={result.converged})"
            )

        if not dual_feasibility_check(result.lp.duals, capacities, topology, w, 1e-8):
            report.failures.append(f"{label}: 对偶可行性检查失败")

        schedule_report = verify_schedule(result.schedule, capacities, w, topology)
        if not schedule_report.feasible or \
                schedule_report.theta_achieved < result.theta - 1e-9 * result.theta:
            report.failures.append(f"{label}: 调度复核失败 {schedule_report.violations}")

        weights = rng.normal(size=len(topology.links))
        _, dp_value = max_weight_matching(weights, topology)
        _, brute_value = brute_force_matching(weights, topology)
        if dp_value != brute_value:
            report.failures.append(f"{label}: 匹配值不一致 DP={dp_value!r} 暴力={brute_value!r}")

        logger.debug(f"{label}: θ={result.theta:.6e}, 迭代={result.iterations}, 相对误差={error:.3e}")

    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, report.summary())
    for failure in report.failures:
        logger.warning(failure)
    return report


