"""
调度解文件的读写

解文件是纯文本，由四个小节组成，可以独立回放复核：

    [summary]        key = value 形式的摘要（θ、迭代次数、种子等）
    [topology]       每行一个节点：id kind x y parent（MBS 的 parent 为 -）
    [capacities]     每行一条链路：link parent child capacity
    [schedule]       每行一个时隙：duration link,link,...（空激活集合写作 -）

按激活集合计算容量时，另有 [activation_capacities] 小节，
每行为 link,link,... capacity,capacity,...，与激活集合一一对应。

浮点数一律以 %.17e 写出，读回后与原值逐位相同。
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from network_topology import NodeKind, Topology, topology_from_parents
from schedule_optimizer import Schedule


SECTIONS = ('summary', 'topology', 'capacities', 'schedule', 'activation_capacities')
FLOAT_FORMAT = '%.17e'


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def _format_links(links: Iterable[int]) -> str:
    links = sorted(links)
    return ','.join(str(i) for i in links) if links else '-'


def _parse_links(token: str, line_no: int) -> FrozenSet[int]:
    if token == '-':
        return frozenset()
    try:
        return frozenset(int(t) for t in token.split(','))
    except ValueError:
        raise ValueError(f"第 {line_no} 行: 无法解析链路列表 '{token}'")


def format_schedule(schedule: Schedule) -> List[str]:
    """调度的文本形式，每个时隙一行"""
    return [f"{_fmt(duration)} {_format_links(activation)}" for duration, activation in schedule.slots]


def parse_schedule(lines: Iterable[str], first_line: int = 1) -> Schedule:
    """
    解析 format_schedule 输出的时隙行

    Raises:
        ValueError: 行格式错误（消息中带行号）
    """
    slots = []
    for offset, line in enumerate(lines):
        line_no = first_line + offset
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"第 {line_no} 行: 时隙行应为 'duration link,link,...'")
        try:
            duration = float(parts[0])
        except ValueError:
            raise ValueError(f"第 {line_no} 行: 无法解析时隙长度 '{parts[0]}'")
        slots.append((duration, _parse_links(parts[1], line_no)))
    return Schedule(tuple(slots))


@dataclass
class SolutionFile:
    """
    可回放的调度解

    Attributes:
        topology: 网络拓扑
        capacities: 每条链路的（保守）容量
        schedule: 调度
        summary: 摘要字段（theta_bps、iterations、converged 等），值为字符串
        activation_capacities: 可选，激活集合到各链路容量的映射
    """
    topology: Topology
    capacities: np.ndarray
    schedule: Schedule
    summary: Dict[str, str] = field(default_factory=dict)
    activation_capacities: Optional[Dict[FrozenSet[int], np.ndarray]] = None

    @property
    def theta(self) -> float:
        return float(self.summary['theta_bps'])

    def column_builder(self):
        """按激活集合查表的容量函数；未记录时返回 None"""
        if self.activation_capacities is None:
            return None
        table = self.activation_capacities

        def lookup(activation):
            key = frozenset(activation)
            if key not in table:
                raise ValueError(f"解文件中没有激活集合 {sorted(key)} 的容量")
            return table[key]

        return lookup

    def to_text(self) -> str:
        """序列化为文本"""
        lines = ['[summary]']
        for key, value in self.summary.items():
            lines.append(f"{key} = {value}")
        lines.append(f"degree_cap = {self.topology.degree_cap}")

        lines.append('[topology]')
        for node in self.topology.nodes:
            parent = self.topology.parent.get(node.id)
            lines.append(f"{node.id} {node.kind.value} {_fmt(node.position[0])} {_fmt(node.position[1])} "
                         f"{'-' if parent is None else parent}")

        lines.append('[capacities]')
        for link_id, (m, k) in enumerate(self.topology.links):
            lines.append(f"{link_id} {m} {k} {_fmt(self.capacities[link_id])}")

        lines.append('[schedule]')
        lines.extend(format_schedule(self.schedule))

        if self.activation_capacities is not None:
            lines.append('[activation_capacities]')
            for _, activation in self.schedule.slots:
                caps = self.activation_capacities[frozenset(activation)]
                active = sorted(activation)
                values = ','.join(_fmt(caps[i]) for i in active) if active else '-'
                lines.append(f"{_format_links(active)} {values}")

        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'SolutionFile':
        """
        从文本反序列化

        Raises:
            ValueError: 缺少小节或行格式错误（消息中带行号）
        """
        sections: Dict[str, List[Tuple[int, str]]] = {}
        current = None
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if line.startswith('[') and line.endswith(']'):
                current = line[1:-1]
                if current not in SECTIONS:
                    raise ValueError(f"第 {line_no} 行: 未知小节 [{current}]")
                sections[current] = []
                continue
            if current is None:
                raise ValueError(f"第 {line_no} 行: 内容出现在任何小节之前")
            sections[current].append((line_no, line))

        for name in SECTIONS[:4]:
            if name not in sections:
                raise ValueError(f"解文件缺少 [{name}] 小节")

        summary = {}
        for line_no, line in sections['summary']:
            key, sep, value = line.partition('=')
            if not sep:
                raise ValueError(f"第 {line_no} 行: 摘要行应为 'key = value'")
            summary[key.strip()] = value.strip()
        if 'theta_bps' not in summary:
            raise ValueError("解文件摘要缺少 theta_bps")
        try:
            degree_cap = int(summary.pop('degree_cap'))
        except (KeyError, ValueError):
            raise ValueError("解文件摘要缺少有效的 degree_cap")

        kinds, positions, parent = [], [], {}
        for line_no, line in sections['topology']:
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"第 {line_no} 行: 节点行应为 'id kind x y parent'")
            try:
                node_id = int(parts[0])
                kind = NodeKind(parts[1])
                position = (float(parts[2]), float(parts[3]))
                parent_id = None if parts[4] == '-' else int(parts[4])
            except ValueError:
                raise ValueError(f"第 {line_no} 行: 无法解析节点 '{line}'")
            if node_id != len(kinds):
                raise ValueError(f"第 {line_no} 行: 节点编号应为 {len(kinds)}")
            kinds.append(kind)
            positions.append(position)
            if parent_id is not None:
                parent[node_id] = parent_id
        topology = topology_from_parents(kinds, parent, positions, degree_cap)

        capacities = np.zeros(len(topology.links))
        seen = set()
        for line_no, line in sections['capacities']:
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"第 {line_no} 行: 容量行应为 'link parent child capacity'")
            try:
                link_id, m, k = (int(p) for p in parts[:3])
                value = float(parts[3])
            except ValueError:
                raise ValueError(f"第 {line_no} 行: 无法解析容量 '{line}'")
            if link_id >= len(topology.links) or topology.links[link_id] != (m, k):
                raise ValueError(f"第 {line_no} 行: 链路 {link_id} ({m}->{k}) 与拓扑不一致")
            capacities[link_id] = value
            seen.add(link_id)
        if len(seen) != len(topology.links):
            raise ValueError("[capacities] 小节没有覆盖全部链路")

        schedule_lines = sections['schedule']
        schedule = parse_schedule([line for _, line in schedule_lines],
                                  schedule_lines[0][0] if schedule_lines else 1)

        activation_capacities = None
        if 'activation_capacities' in sections:
            activation_capacities = {}
            for line_no, line in sections['activation_capacities']:
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"第 {line_no} 行: 应为 'link,link,... capacity,capacity,...'")
                activation = _parse_links(parts[0], line_no)
                try:
                    values = [] if parts[1] == '-' else [float(v) for v in parts[1].split(',')]
                except ValueError:
                    raise ValueError(f"第 {line_no} 行: 无法解析容量 '{parts[1]}'")
                if len(values) != len(activation):
                    raise ValueError(f"第 {line_no} 行: 容量个数与激活链路数不一致")
                caps = np.zeros(len(topology.links))
                for link_id, value in zip(sorted(activation), values):
                    caps[link_id] = value
                activation_capacities[activation] = caps

        return cls(topology, capacities, schedule, summary, activation_capacities)

    def __repr__(self) -> str:
        return (f"SolutionFile(theta={self.summary.get('theta_bps')}, "
                f"nodes={len(self.topology.nodes)}, slots={len(self.schedule.slots)})")


def write_solution(solution: SolutionFile, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(solution.to_text())


def read_solution(path: str) -> SolutionFile:
    """
    读取解文件

    Raises:
        ValueError: 文件格式错误
        IOError: 文件读取错误
    """
    with open(path, 'r', encoding='utf-8') as f:
        return SolutionFile.from_text(f.read())
