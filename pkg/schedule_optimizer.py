"""
调度优化模块

以列生成求解最小吞吐量最大化问题：

    max θ   s.t.  C t >= θ w,  1^T t = 1,  t >= 0

引入剩余变量后的标准形为 min f^T x, U x = g, x >= 0，其中
U = [[C, -w, -I], [1^T, 0, 0^T]]，f = [0, -1, 0]，g = [0, 1]。

每一轮：
1. 用修正单纯形法求解受限主问题（只含已生成的调度列），得到对偶价格 p
2. 链路权重 c_{m,k}(p_k - p_m)（发射端为 MBS 时 p_m = 0）
3. 在树形网络上做最大权匹配，得到检验数最小的新激活集合
4. 若 η = min(η1, η2, η3) >= -tolerance 则已达最优，否则加入新列继续
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from network_topology import Topology, is_valid_activation, user_weights
from revised_simplex import RevisedSimplex


logger = logging.getLogger('IABSim.optimizer')

DURATION_EPS = 1e-12


@dataclass(frozen=True)
class CapacityColumn:
    """
    调度列：一个激活集合（匹配）及其各非 MBS 节点的净速率

    net_rate[k] = Σ_{m∈B_k} c_{m,k} - Σ_{n∈A_k} c_{k,n}
    """
    activation: FrozenSet[int]
    net_rate: np.ndarray


@dataclass(frozen=True)
class LpSolution:
    """
    受限主问题的解

    Attributes:
        theta: 最小（加权）吞吐量
        slot_durations: 各调度列的时隙长度 t
        basis: 最优基（P0 的列号）
        duals: 对偶价格 p，前 R+K 个对应节点行，最后一个对应帧约束行
        pivots: 换基次数
    """
    theta: float
    slot_durations: np.ndarray
    basis: Tuple[int, ...]
    duals: np.ndarray
    pivots: int = 0

    @property
    def frame_dual(self) -> float:
        return float(self.duals[-1])


@dataclass(frozen=True)
class Schedule:
    """一帧内的调度：(时隙长度, 激活链路集合) 列表，时隙长度之和为 1"""
    slots: Tuple[Tuple[float, FrozenSet[int]], ...]

    @property
    def total_duration(self) -> float:
        return math.fsum(d for d, _ in self.slots)


@dataclass(frozen=True)
class OptimizationResult:
    theta: float
    schedule: Schedule
    iterations: int
    converged: bool
    lp: LpSolution
    theta_history: Tuple[float, ...] = ()
    num_columns: int = 0


@dataclass(frozen=True)
class ScheduleReport:
    theta_achieved: float
    per_node_throughput: dict
    feasible: bool
    violations: Tuple[str, ...] = field(default_factory=tuple)


def column_from_activation(activation: Iterable[int], capacities, topology: Topology) -> CapacityColumn:
    """
    由激活集合构造调度列

    Args:
        activation: 激活链路编号集合，必须是匹配
        capacities: 每条链路的容量
        topology: 网络拓扑

    Returns:
        CapacityColumn

    Raises:
        ValueError: 激活集合不是匹配
    """
    activation = frozenset(int(i) for i in activation)
    if not is_valid_activation(activation, topology):
        raise ValueError(f"激活集合 {sorted(activation)} 不是匹配")
    net_rate = np.zeros(topology.num_rows)
    for link_id in activation:
        m, k = topology.links[link_id]
        c = float(capacities[link_id])
        net_rate[topology.row_of(k)] += c
        if not topology.is_mbs(m):
            net_rate[topology.row_of(m)] -= c
    return CapacityColumn(activation, net_rate)


def initial_columns(topology: Topology, capacities) -> List[CapacityColumn]:
    """初始调度：每个时隙只激活一条链路，共 R+K 列"""
    return [column_from_activation({i}, capacities, topology) for i in range(len(topology.links))]


def _check_weights(w: np.ndarray, num_rows: int):
    if w.shape != (num_rows,):
        raise ValueError(f"权重向量长度 {w.shape} 与节点数 {num_rows} 不一致")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("权重必须非负且至少有一个为正")


def solve_restricted_lp(columns: Sequence[CapacityColumn], w, tolerance: float = 1e-9,
                        basis: Optional[Sequence[int]] = None) -> LpSolution:
    """
    求解受限主问题 P0

    Args:
        columns: 调度列
        w: 权重向量
        tolerance: 最优性容差
        basis: 可选的可行初始基（热启动）

    Returns:
        LpSolution，θ 为目标值的相反数，对偶价格 p = f_B^T B^-1
    """
    if not columns:
        raise ValueError("至少需要一个调度列")
    w = np.asarray(w, dtype=float)
    num_rows = len(columns[0].net_rate)
    _check_weights(w, num_rows)
    n = len(columns)

    U = np.zeros((num_rows + 1, n + 1 + num_rows))
    U[:num_rows, :n] = np.column_stack([col.net_rate for col in columns])
    U[:num_rows, n] = -w
    U[:num_rows, n + 1:] = -np.eye(num_rows)
    U[num_rows, :n] = 1.0
    g = np.zeros(num_rows + 1)
    g[num_rows] = 1.0
    f = np.zeros(n + 1 + num_rows)
    f[n] = -1.0

    result = RevisedSimplex(U, g, f, tolerance=tolerance, stall_limit=5 * num_rows).solve(basis)
    return LpSolution(
        theta=max(0.0, -result.objective),
        slot_durations=result.x[:n],
        basis=result.basis,
        duals=result.duals,
        pivots=result.pivots,
    )


def price_links(duals, capacities, topology: Topology) -> np.ndarray:
    """
    链路权重（定价）

    发射端为 SBS 时 weight = c_{m,k}(p_k - p_m)，发射端为 MBS 时 weight = c_{m,k} p_k。
    候选列的检验数为 -Σ weight - p_frame。
    """
    p = np.asarray(duals, dtype=float)
    caps = np.asarray(capacities, dtype=float)
    weights = np.zeros(len(topology.links))
    for i, (m, k) in enumerate(topology.links):
        p_m = 0.0 if topology.is_mbs(m) else p[topology.row_of(m)]
        weights[i] = caps[i] * (p[topology.row_of(k)] - p_m)
    return weights


def max_weight_matching(weights, topology: Topology) -> Tuple[FrozenSet[int], float]:
    """
    森林上的最大权匹配（自叶向根的动态规划）

    对每个节点 v 记录两个值：
    - free[v]: v 不与任何子节点匹配时子树的最优值
    - best[v]: 子树的最优值（v 可以与一个子节点匹配）
    权重 <= 0 的链路不参与匹配。

    Returns:
        (激活集合, 总权重)
    """
    weights = np.asarray(weights, dtype=float)
    free = {}
    best = {}
    pick = {}
    for v in topology.postorder():
        kids = topology.children[v]
        total = math.fsum(best[c] for c, _ in kids)
        free[v] = total
        best[v] = total
        pick[v] = None
        for c, link_id in kids:
            wgt = weights[link_id]
            if wgt <= 0:
                continue
            gain = total - best[c] + free[c] + wgt
            if gain > best[v]:
                best[v] = gain
                pick[v] = link_id

    activation = set()
    stack = [(n.id, False) for n in topology.nodes if n.id not in topology.parent]
    while stack:
        v, matched_up = stack.pop()
        chosen = None if matched_up else pick[v]
        if chosen is not None:
            activation.add(chosen)
        for c, link_id in topology.children[v]:
            stack.append((c, link_id == chosen))

    value = math.fsum(weights[i] for i in activation)
    return frozenset(activation), value


def optimality_terms(duals, best_matching_value: float, w) -> Tuple[float, float, float]:
    """
    三个检验数

    η1 = -W* - p_frame（最优新调度列）
    η2 = -1 + Σ p_i w_i（θ 列）
    η3 = min p_i（剩余变量列）
    """
    p = np.asarray(duals, dtype=float)
    w = np.asarray(w, dtype=float)
    eta1 = -best_matching_value - p[-1]
    eta2 = -1.0 + float(p[:-1] @ w)
    eta3 = float(p[:-1].min()) if len(p) > 1 else 0.0
    return eta1, eta2, eta3


def optimality_gap(duals, best_matching_value: float, w) -> float:
    """η = min(η1, η2, η3)，η >= 0 即为全局最优"""
    return min(optimality_terms(duals, best_matching_value, w))


def _shift_basis(basis: Sequence[int], old_columns: int, new_columns: int) -> List[int]:
    """新增调度列后，θ 列与剩余变量列的列号整体后移"""
    shift = new_columns - old_columns
    return [j if j < old_columns else j + shift for j in basis]


def optimize(topology: Topology, capacities, w=None, tolerance: float = 1e-9,
             max_iterations: Optional[int] = None,
             column_builder: Optional[Callable[[FrozenSet[int]], np.ndarray]] = None) -> OptimizationResult:
    """
    列生成主循环

    Args:
        topology: 网络拓扑
        capacities: 每条链路的容量（bit/s），用于定价和默认的列构造
        w: 权重向量，缺省为用户 1、基站 0
        tolerance: 最优性容差（容量归一化后的相对容差）
        max_iterations: 定价轮数上限，缺省为 10·(R+K)
        column_builder: 可选，按激活集合返回各链路容量（按激活集合计算干扰时使用）

    Returns:
        OptimizationResult；达到轮数上限时 converged 为 False，返回当前最优解
    """
    if tolerance <= 0:
        raise ValueError("容差必须大于 0")
    num_rows = topology.num_rows
    w = user_weights(topology) if w is None else np.asarray(w, dtype=float)
    _check_weights(w, num_rows)
    if max_iterations is None:
        max_iterations = 10 * num_rows
    if max_iterations < 1:
        raise ValueError("最大迭代次数必须 >= 1")

    caps = np.asarray(capacities, dtype=float)
    scale = float(caps.max()) if caps.size and caps.max() > 0 else 1.0
    norm_caps = caps / scale

    def make_column(activation):
        link_caps = norm_caps if column_builder is None else np.asarray(column_builder(activation)) / scale
        return column_from_activation(activation, link_caps, topology)

    columns = [make_column(frozenset({i})) for i in range(len(topology.links))]
    known = {col.activation for col in columns}
    lp = solve_restricted_lp(columns, w, tolerance)
    history = [lp.theta * scale]

    converged = False
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        weights = price_links(lp.duals, norm_caps, topology)
        activation, value = max_weight_matching(weights, topology)
        candidate = None
        if column_builder is not None:
            candidate = make_column(activation)
            value = float(lp.duals[:-1] @ candidate.net_rate)
        eta1, eta2, eta3 = optimality_terms(lp.duals, value, w)
        eta = min(eta1, eta2, eta3)
        logger.debug(
            f"第 {iterations} 轮定价: θ={lp.theta * scale:.6e}, η1={eta1:.3e}, η2={eta2:.3e}, "
            f"η3={eta3:.3e}, 匹配链路数={len(activation)}"
        )

        if eta >= -tolerance:
            converged = True
            break
        if activation in known:
            if eta >= -10 * tolerance:
                converged = True
            else:
                logger.warning(f"定价得到已有的列 {sorted(activation)}，η={eta:.3e}，提前结束")
            break

        candidate = candidate or make_column(activation)
        old_count = len(columns)
        columns.append(candidate)
        known.add(activation)
        lp = solve_restricted_lp(columns, w, tolerance,
                                 basis=_shift_basis(lp.basis, old_count, len(columns)))
        history.append(lp.theta * scale)

    if not converged:
        logger.warning(f"列生成在 {iterations} 轮后未收敛，返回当前最优 θ={lp.theta * scale:.6e}")

    slots = tuple((float(t), columns[i].activation)
                  for i, t in enumerate(lp.slot_durations) if t > DURATION_EPS)
    duals = lp.duals.copy()
    duals[-1] *= scale
    final_lp = replace(lp, theta=lp.theta * scale, duals=duals)
    return OptimizationResult(
        theta=final_lp.theta,
        schedule=Schedule(slots),
        iterations=iterations,
        converged=converged,
        lp=final_lp,
        theta_history=tuple(history),
        num_columns=len(columns),
    )


def verify_schedule(schedule: Schedule, capacities, w, topology: Topology,
                    column_builder: Optional[Callable[[FrozenSet[int]], np.ndarray]] = None,
                    tolerance: float = 1e-9) -> ScheduleReport:
    """
    独立复核调度

    从头重新计算每个非 MBS 节点的净吞吐量以及对应的最小加权吞吐量，不依赖求解器内部状态。

    Raises:
        ValueError: 调度格式错误（时隙长度为负或总和不为 1）
    """
    w = np.asarray(w, dtype=float)
    _check_weights(w, topology.num_rows)
    durations = [d for d, _ in schedule.slots]
    if any(d < -DURATION_EPS for d in durations):
        raise ValueError("时隙长度不能为负")
    total = math.fsum(durations)
    if abs(total - 1.0) > tolerance:
        raise ValueError(f"时隙长度之和为 {total}，应为 1")

    caps = np.asarray(capacities, dtype=float)
    scale = float(caps.max()) if caps.size and caps.max() > 0 else 1.0
    violations = []
    throughput = np.zeros(topology.num_rows)
    for index, (duration, activation) in enumerate(schedule.slots):
        if not is_valid_activation(activation, topology):
            violations.append(f"时隙 {index} 的激活集合 {sorted(activation)} 不是匹配")
            continue
        link_caps = caps if column_builder is None else np.asarray(column_builder(frozenset(activation)))
        throughput += duration * column_from_activation(activation, link_caps, topology).net_rate

    served = w > 0
    theta_achieved = float(np.min(throughput[served] / w[served]))
    for row in np.flatnonzero(~served):
        if throughput[row] < -tolerance * scale:
            violations.append(f"节点 {row + topology.num_mbs} 的净吞吐量为负: {throughput[row]:.6e}")

    per_node = {row + topology.num_mbs: float(throughput[row]) for row in range(topology.num_rows)}
    return ScheduleReport(
        theta_achieved=theta_achieved,
        per_node_throughput=per_node,
        feasible=not violations,
        violations=tuple(violations),
    )
