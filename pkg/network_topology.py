"""
网络拓扑模块

负责 IAB 网络的节点布置、回传森林构建、用户关联和链路枚举：
- MBS 位置由布局预先确定，SBS 与用户在正方形区域内均匀随机分布
- 回传网络从 MBS 出发按树形扩展，每个基站最多 C 个 SBS 子节点
- 用户关联到（平均）接收功率最大的基站
- 网络共有 R+K 条有向链路（每个 SBS 一条回传链路，每个用户一条接入链路）

节点编号约定：MBS 为 0..M-1，SBS 为 M..M+R-1，用户为 M+R..M+R+K-1。
链路 i 的接收端恰好是节点 M+i，因此链路编号与非 MBS 节点的行号一一对应。
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from channel_model import ChannelParams, db_to_linear, dbm_to_watts, los_probability, path_loss_db


MBS_LAYOUTS = ('auto', 'center', 'two_symmetric', 'four_quadrant', 'explicit')
ASSOCIATION_METRICS = ('pathloss', 'rx_power')

logger = logging.getLogger('IABSim.topology')


class TopologyError(ValueError):
    """拓扑构建失败或违反森林约束"""


class NodeKind(str, enum.Enum):
    MBS = 'MBS'
    SBS = 'SBS'
    USER = 'USER'


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    position: Tuple[float, float]

    @property
    def is_bs(self) -> bool:
        return self.kind != NodeKind.USER


@dataclass(frozen=True)
class DeploymentConfig:
    """
    部署参数

    Attributes:
        area_side: 正方形区域边长（米）
        num_mbs / num_sbs / num_users: M / R / K
        degree_cap: 每个基站最多的 SBS 子节点数 C
        mbs_layout: MBS 布局名称，'auto' 按 M 选择 center/two_symmetric/four_quadrant
        mbs_positions: mbs_layout 为 'explicit' 时使用的坐标列表
    """
    area_side: float = 400.0
    num_mbs: int = 1
    num_sbs: int = 2
    num_users: int = 10
    degree_cap: int = 2
    mbs_layout: str = 'auto'
    mbs_positions: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.area_side <= 0:
            raise ValueError("区域边长必须大于 0")
        if self.num_mbs < 1:
            raise ValueError("MBS 数量 M 必须 >= 1")
        if self.num_sbs < 0:
            raise ValueError("SBS 数量 R 不能为负")
        if self.num_users < 1:
            raise ValueError("用户数量 K 必须 >= 1")
        if self.degree_cap < 1:
            raise ValueError("最大子节点数 C 必须 >= 1")
        if self.mbs_layout not in MBS_LAYOUTS:
            raise ValueError(f"MBS 布局必须是以下之一: {', '.join(MBS_LAYOUTS)}")


@dataclass(frozen=True)
class Topology:
    """
    网络拓扑

    parent 给出每个 SBS 和用户的父节点（MBS 没有父节点），
    links 为按子节点编号排序的 (父节点, 子节点) 有向链路。
    """
    nodes: Tuple[Node, ...]
    parent: Mapping[int, int]
    degree_cap: int
    links: Tuple[Tuple[int, int], ...]
    num_mbs: int = field(default=0)
    num_sbs: int = field(default=0)

    @property
    def num_users(self) -> int:
        return len(self.nodes) - self.num_mbs - self.num_sbs

    @property
    def num_rows(self) -> int:
        """非 MBS 节点数，即 R+K"""
        return len(self.nodes) - self.num_mbs

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([node.position for node in self.nodes], dtype=float).reshape(-1, 2)

    @cached_property
    def children(self) -> Dict[int, List[Tuple[int, int]]]:
        """每个节点的 (子节点, 链路编号) 列表，按子节点编号排序"""
        result = {node.id: [] for node in self.nodes}
        for link_id, (m, k) in enumerate(self.links):
            result[m].append((k, link_id))
        return result

    @cached_property
    def depth(self) -> Dict[int, int]:
        """每个节点到其根 MBS 的跳数"""
        result = {}
        for node in self.nodes:
            hops, current = 0, node.id
            while current in self.parent:
                current = self.parent[current]
                hops += 1
            result[node.id] = hops
        return result

    def row_of(self, node_id: int) -> int:
        """非 MBS 节点在容量向量中的行号"""
        return node_id - self.num_mbs

    def is_mbs(self, node_id: int) -> bool:
        return node_id < self.num_mbs

    def link_index(self, parent: int, child: int) -> int:
        if self.parent.get(child) != parent:
            raise KeyError(f"链路 {parent}->{child} 不在拓扑中")
        return child - self.num_mbs

    def postorder(self) -> List[int]:
        """子节点先于父节点的遍历顺序"""
        return sorted((node.id for node in self.nodes), key=lambda n: (-self.depth[n], n))

    def validate(self):
        """
        检查拓扑不变量

        Raises:
            TopologyError: 存在环、孤立节点、超出度数上限或链路数不等于 R+K
        """
        for node in self.nodes:
            if node.kind == NodeKind.MBS:
                if node.id in self.parent:
                    raise TopologyError(f"MBS {node.id} 不应有父节点")
                continue
            seen, current = set(), node.id
            while current in self.parent:
                if current in seen:
                    raise TopologyError(f"节点 {node.id} 的父链存在环")
                seen.add(current)
                current = self.parent[current]
            if not self.is_mbs(current):
                raise TopologyError(f"节点 {node.id} 无法回溯到 MBS")
            if not self.nodes[self.parent[node.id]].is_bs:
                raise TopologyError(f"节点 {node.id} 的父节点不是基站")
        for bs, kids in self.children.items():
            sbs_kids = sum(1 for k, _ in kids if self.nodes[k].kind == NodeKind.SBS)
            if sbs_kids > self.degree_cap:
                raise TopologyError(f"基站 {bs} 有 {sbs_kids} 个 SBS 子节点，超过上限 C={self.degree_cap}")
        if len(self.links) != self.num_rows:
            raise TopologyError(f"链路数 {len(self.links)} 不等于 R+K={self.num_rows}")


def mbs_layout_positions(config: DeploymentConfig) -> List[Tuple[float, float]]:
    """
    根据布局计算 MBS 坐标

    Raises:
        ValueError: 布局与 MBS 数量不匹配
    """
    side = config.area_side
    layout = config.mbs_layout
    if layout == 'auto':
        layout = {1: 'center', 2: 'two_symmetric', 4: 'four_quadrant'}.get(config.num_mbs, 'explicit')
    presets = {
        'center': [(side / 2, side / 2)],
        'two_symmetric': [(side / 4, side / 2), (3 * side / 4, side / 2)],
        'four_quadrant': [(side / 4, side / 4), (3 * side / 4, side / 4),
                          (side / 4, 3 * side / 4), (3 * side / 4, 3 * side / 4)],
    }
    positions = presets.get(layout, [tuple(p) for p in config.mbs_positions])
    if len(positions) != config.num_mbs:
        raise ValueError(
            f"MBS 布局 '{config.mbs_layout}' 给出 {len(positions)} 个位置，但 M={config.num_mbs}"
        )
    for x, y in positions:
        if not (0 <= x <= side and 0 <= y <= side):
            raise ValueError(f"MBS 位置 ({x}, {y}) 超出部署区域")
    return [(float(x), float(y)) for x, y in positions]


def generate_deployment(config: DeploymentConfig, rng: np.random.Generator,
                        user_rng: Optional[np.random.Generator] = None) -> List[Node]:
    """
    生成节点布置

    Args:
        config: 部署参数
        rng: SBS 位置使用的随机数生成器
        user_rng: 用户位置使用的随机数生成器，缺省时与 rng 相同

    Returns:
        按编号排列的节点列表
    """
    user_rng = rng if user_rng is None else user_rng
    nodes = [Node(i, NodeKind.MBS, pos) for i, pos in enumerate(mbs_layout_positions(config))]
    sbs_xy = rng.uniform(0.0, config.area_side, size=(config.num_sbs, 2))
    user_xy = user_rng.uniform(0.0, config.area_side, size=(config.num_users, 2))
    for xy in sbs_xy:
        nodes.append(Node(len(nodes), NodeKind.SBS, (float(xy[0]), float(xy[1]))))
    for xy in user_xy:
        nodes.append(Node(len(nodes), NodeKind.USER, (float(xy[0]), float(xy[1]))))
    return nodes


def node_distance(a: Node, b: Node) -> float:
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])


def mean_path_loss(m: Node, k: Node, params: ChannelParams) -> float:
    """
    对 LOS 随机性取平均的线性路径增益（阴影为 0）

    p_L(d)·PL_LOS^-1(d) + (1-p_L(d))·PL_NLOS^-1(d)，距离小于 1 m 时按 1 m 计算。
    """
    d = max(node_distance(m, k), 1.0)
    p_los = los_probability(d, params.beta)
    gain_los = float(db_to_linear(-path_loss_db(d, True, 0.0, params)))
    gain_nlos = float(db_to_linear(-path_loss_db(d, False, 0.0, params)))
    return p_los * gain_los + (1.0 - p_los) * gain_nlos


def associate_users(nodes: Sequence[Node], params: ChannelParams, metric: str = 'rx_power',
                    p_mbs_dbm: float = 40.0, p_sbs_dbm: float = 30.0) -> Dict[int, int]:
    """
    用户关联

    'pathloss' 选择平均路径增益最大的基站；'rx_power' 额外乘以发射功率。
    并列时选择编号最小的基站。

    Returns:
        用户编号到服务基站编号的映射
    """
    if metric not in ASSOCIATION_METRICS:
        raise ValueError(f"关联指标必须是以下之一: {', '.join(ASSOCIATION_METRICS)}")
    stations = [n for n in nodes if n.is_bs]
    if not stations:
        raise TopologyError("没有可关联的基站")
    powers = {}
    for bs in stations:
        powers[bs.id] = dbm_to_watts(p_mbs_dbm if bs.kind == NodeKind.MBS else p_sbs_dbm) \
            if metric == 'rx_power' else 1.0

    association = {}
    for user in (n for n in nodes if n.kind == NodeKind.USER):
        best_id, best_value = None, -math.inf
        for bs in stations:
            value = powers[bs.id] * mean_path_loss(bs, user, params)
            if value > best_value:
                best_id, best_value = bs.id, value
        association[user.id] = best_id
    return association


def build_backhaul_forest(bs_nodes: Sequence[Node], params: ChannelParams, degree_cap: int) -> Dict[int, int]:
    """
    贪心（Prim 风格）构建回传森林

    每一步在所有「未连接 SBS × 仍有空余容量的已连接基站」组合中，
    选择平均路径增益最大的一对进行连接；并列时按 (SBS 编号, 基站编号) 最小者。
    只有 SBS 子节点计入度数上限 C。

    Args:
        bs_nodes: 所有基站节点（MBS 与 SBS）
        params: 信道参数
        degree_cap: 度数上限 C

    Returns:
        SBS 编号到父基站编号的映射

    Raises:
        TopologyError: 没有可用的连接
    """
    if degree_cap < 1:
        raise TopologyError("度数上限 C 必须 >= 1")
    by_id = {n.id: n for n in bs_nodes}
    connected = sorted(n.id for n in bs_nodes if n.kind == NodeKind.MBS)
    if not connected:
        raise TopologyError("至少需要一个 MBS")
    pending = sorted(n.id for n in bs_nodes if n.kind == NodeKind.SBS)
    load = {bs_id: 0 for bs_id in by_id}
    parent = {}

    gains = {}
    for s in pending:
        for b in by_id:
            if b != s:
                gains[(s, b)] = mean_path_loss(by_id[b], by_id[s], params)

    while pending:
        best = None
        for s in pending:
            for b in connected:
                if load[b] >= degree_cap:
                    continue
                key = (-gains[(s, b)], s, b)
                if best is None or key < best:
                    best = key
        if best is None:
            raise TopologyError(
                f"无法连接剩余 SBS {pending}: 已连接基站 {connected} 的子节点容量均已用尽 (C={degree_cap})"
            )
        _, s, b = best
        parent[s] = b
        load[b] += 1
        pending.remove(s)
        connected.append(s)

    return parent


def enumerate_links(nodes: Sequence[Node], backhaul_parent: Mapping[int, int],
                    association: Mapping[int, int]) -> List[Tuple[int, int]]:
    """
    枚举 R+K 条有向链路：先按 SBS 编号列出回传链路，再按用户编号列出接入链路
    """
    links = []
    for node in nodes:
        if node.kind == NodeKind.SBS:
            links.append((backhaul_parent[node.id], node.id))
    for node in nodes:
        if node.kind == NodeKind.USER:
            links.append((association[node.id], node.id))
    return links


def build_topology(nodes: Sequence[Node], params: ChannelParams, degree_cap: int,
                   association_metric: str = 'rx_power',
                   p_mbs_dbm: float = 40.0, p_sbs_dbm: float = 30.0) -> Topology:
    """
    由节点布置构建完整拓扑（回传森林 + 用户关联 + 链路）
    """
    nodes = tuple(nodes)
    bs_nodes = [n for n in nodes if n.is_bs]
    backhaul = build_backhaul_forest(bs_nodes, params, degree_cap)
    association = associate_users(nodes, params, association_metric, p_mbs_dbm, p_sbs_dbm)
    parent = dict(backhaul)
    parent.update(association)
    topology = Topology(
        nodes=nodes,
        parent=parent,
        degree_cap=degree_cap,
        links=tuple(enumerate_links(nodes, backhaul, association)),
        num_mbs=sum(1 for n in nodes if n.kind == NodeKind.MBS),
        num_sbs=sum(1 for n in nodes if n.kind == NodeKind.SBS),
    )
    topology.validate()
    return topology


def topology_from_parents(kinds: Sequence[NodeKind], parent: Mapping[int, int],
                          positions: Optional[Sequence[Tuple[float, float]]] = None,
                          degree_cap: Optional[int] = None) -> Topology:
    """
    由显式的父节点映射构建拓扑（用于测试、回放和参考实现）

    kinds 必须按 MBS、SBS、用户的顺序排列。
    """
    if positions is None:
        positions = [(0.0, 0.0)] * len(kinds)
    nodes = tuple(Node(i, NodeKind(kind), tuple(positions[i])) for i, kind in enumerate(kinds))
    order = [NodeKind.MBS, NodeKind.SBS, NodeKind.USER]
    if [order.index(n.kind) for n in nodes] != sorted(order.index(n.kind) for n in nodes):
        raise TopologyError("节点必须按 MBS、SBS、用户的顺序编号")
    if degree_cap is None:
        counts = {}
        for child, p in parent.items():
            if nodes[child].kind == NodeKind.SBS:
                counts[p] = counts.get(p, 0) + 1
        degree_cap = max([1] + list(counts.values()))
    links = tuple((parent[n.id], n.id) for n in nodes if n.kind != NodeKind.MBS)
    topology = Topology(
        nodes=nodes,
        parent=dict(parent),
        degree_cap=degree_cap,
        links=links,
        num_mbs=sum(1 for n in nodes if n.kind == NodeKind.MBS),
        num_sbs=sum(1 for n in nodes if n.kind == NodeKind.SBS),
    )
    topology.validate()
    return topology


def is_valid_activation(link_set: Iterable[int], topology: Topology) -> bool:
    """
    激活集合是否为匹配（任意两条链路不共享节点）

    同时体现 TDMA（基站一次只服务一条链路）与半双工（不能同时收发）约束。
    """
    used = set()
    for link_id in link_set:
        m, k = topology.links[link_id]
        if m in used or k in used:
            return False
        used.update((m, k))
    return True


def user_weights(topology: Topology, weight: float = 1.0) -> np.ndarray:
    """最小吞吐量权重向量：基站行为 0，用户行为 weight"""
    w = np.zeros(topology.num_rows)
    w[topology.num_sbs:] = weight
    return w


def mbs_association_count(topology: Topology) -> int:
    """由 MBS 直接服务的用户数"""
    return sum(1 for n in topology.nodes
               if n.kind == NodeKind.USER and topology.is_mbs(topology.parent[n.id]))


def mean_user_hops(topology: Topology) -> float:
    """用户到其根 MBS 的平均跳数"""
    hops = [topology.depth[n.id] for n in topology.nodes if n.kind == NodeKind.USER]
    return math.fsum(hops) / len(hops)


def idle_sbs_count(topology: Topology) -> int:
    """没有关联用户的 SBS 数量（只做中继或不工作）"""
    idle = 0
    for node in topology.nodes:
        if node.kind == NodeKind.SBS and not any(
                topology.nodes[k].kind == NodeKind.USER for k, _ in topology.children[node.id]):
            idle += 1
    return idle
