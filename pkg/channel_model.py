"""
信道模型模块

提供毫米波 IAB 网络的随机信道生成功能，包括：
- 基于距离的 LOS/NLOS 判定（LOS 概率 exp(-beta*d)）
- close-in 自由空间参考距离路径损耗模型
- 对数正态阴影衰落与 Nakagami（gamma 分布）小尺度衰落
- 扇区天线增益模型（干扰链路的随机阵列增益）
- SINR 与链路容量计算

所有运算在线性域完成，dB 与线性值的转换统一使用以 10 为底的对数。
所有随机函数都显式接收 numpy Generator，不使用任何全局状态。
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np


SPEED_OF_LIGHT = 299792458.0  # m/s

FADING_CONVENTIONS = ('reciprocal', 'nakagami')
CAPACITY_MODES = ('conservative', 'per_activation')

logger = logging.getLogger('IABSim.channel')


def db_to_linear(value_db):
    """dB 转线性值"""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def dbm_to_watts(value_dbm: float) -> float:
    """dBm 转瓦特"""
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """
    传播参数

    Attributes:
        carrier_frequency: 载波频率（Hz）
        bandwidth_per_link: 每条链路带宽（Hz）
        alpha_los / alpha_nlos: LOS/NLOS 路径损耗指数
        sigma_los_db / sigma_nlos_db: 阴影衰落标准差（dB）
        beta: 阻挡密度（每米）
        n_los / n_nlos: Nakagami 起伏参数
        noise_psd_dbm_hz: 噪声功率谱密度（dBm/Hz）
        noise_figure_db: 接收机噪声系数（dB）
        fading_convention: 'reciprocal' 表示 q = 1/N，'nakagami' 表示形状参数 m = N
        capacity_mode: 'per_activation'（默认，每个时隙只计同时发射的基站的干扰）或 'conservative'（所有潜在干扰源都计入）
    """
    carrier_frequency: float = 28e9
    bandwidth_per_link: float = 100e6
    alpha_los: float = 2.0
    alpha_nlos: float = 3.3
    sigma_los_db: float = 3.6
    sigma_nlos_db: float = 9.7
    beta: float = 0.01
    n_los: float = 3.0
    n_nlos: float = 2.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 0.0
    fading_convention: str = 'reciprocal'
    capacity_mode: str = 'per_activation'

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ValueError("载波频率必须大于 0")
        if self.bandwidth_per_link <= 0:
            raise ValueError("链路带宽必须大于 0")
        if self.beta < 0:
            raise ValueError("阻挡密度 beta 不能为负")
        if self.alpha_los < 1 or self.alpha_nlos < 1:
            raise ValueError("路径损耗指数必须 >= 1")
        if self.sigma_los_db < 0 or self.sigma_nlos_db < 0:
            raise ValueError("阴影衰落标准差不能为负")
        if self.n_los < 1 or self.n_nlos < 1:
            raise ValueError("Nakagami 参数 N 必须 >= 1")
        if self.fading_convention not in FADING_CONVENTIONS:
            raise ValueError(f"衰落约定必须是以下之一: {', '.join(FADING_CONVENTIONS)}")
        if self.capacity_mode not in CAPACITY_MODES:
            raise ValueError(f"容量模式必须是以下之一: {', '.join(CAPACITY_MODES)}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def noise_watts(self) -> float:
        """噪声功率 σ²（瓦特）：PSD + 10log10(带宽) + 噪声系数"""
        noise_dbm = (self.noise_psd_dbm_hz
                     + 10.0 * math.log10(self.bandwidth_per_link)
                     + self.noise_figure_db)
        return dbm_to_watts(noise_dbm)


@dataclass(frozen=True)
class AntennaConfig:
    """
    扇区天线模型参数

    主瓣内增益为 main_gain，其余角度为 side_gain；波束宽度单位为弧度。
    """
    main_gain_tx_db: float = 10.0
    side_gain_tx_db: float = -10.0
    main_gain_rx_db: float = 10.0
    side_gain_rx_db: float = -10.0
    beamwidth_tx_rad: float = math.radians(30.0)
    beamwidth_rx_rad: float = math.radians(90.0)

    def __post_init__(self):
        if self.main_gain_tx_db < self.side_gain_tx_db:
            raise ValueError("发射主瓣增益不能小于旁瓣增益")
        if self.main_gain_rx_db < self.side_gain_rx_db:
            raise ValueError("接收主瓣增益不能小于旁瓣增益")
        for name, width in (('发射', self.beamwidth_tx_rad), ('接收', self.beamwidth_rx_rad)):
            if not (0 < width <= 2 * math.pi):
                raise ValueError(f"{name}波束宽度必须在 (0, 2π] 之内")

    @property
    def desired_gain(self) -> float:
        """期望链路总是获得最大阵列增益 M_t*M_r（线性）"""
        return float(db_to_linear(self.main_gain_tx_db + self.main_gain_rx_db))

    def gain_outcomes(self) -> Tuple[float, float, float, float]:
        """干扰增益的四个取值 (MtMr, Mtmr, mtMr, mtmr)，线性值"""
        mt, st = self.main_gain_tx_db, self.side_gain_tx_db
        mr, sr = self.main_gain_rx_db, self.side_gain_rx_db
        return tuple(float(db_to_linear(a + b)) for a, b in ((mt, mr), (mt, sr), (st, mr), (st, sr)))

    def gain_probabilities(self) -> Tuple[float, float, float, float]:
        """与 gain_outcomes 对应的解析概率"""
        pt = self.beamwidth_tx_rad / (2 * math.pi)
        pr = self.beamwidth_rx_rad / (2 * math.pi)
        return (pt * pr, pt * (1 - pr), (1 - pt) * pr, (1 - pt) * (1 - pr))


@dataclass(frozen=True)
class LinkDraw:
    """
    单条链路的一次随机实现

    Attributes:
        tx_power_w: 发射功率（瓦特）
        is_los: 是否为 LOS
        shadowing_db: 阴影衰落（dB）
        path_loss_linear: 线性路径增益 l（即 PL 的倒数）
        fading_gain: Nakagami 功率衰落 g
    """
    tx_power_w: float
    is_los: bool
    shadowing_db: float
    path_loss_linear: float
    fading_gain: float


def los_probability(d, beta: float):
    """
    LOS 概率 p_L(d) = exp(-beta*d)

    Args:
        d: 距离（米），可以是标量或数组
        beta: 阻挡密度（每米）

    Returns:
        LOS 概率

    Raises:
        ValueError: 距离或 beta 为负
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError(f"距离不能为负: {d.min()}")
    if beta < 0:
        raise ValueError(f"阻挡密度不能为负: {beta}")
    result = np.exp(-beta * d)
    return float(result) if result.ndim == 0 else result


def path_loss_db(d, is_los, shadowing_db, params: ChannelParams):
    """
    close-in 自由空间参考距离模型的路径损耗

    PL[dB] = 20log10(4π/λ) + 10·α·log10(d) + X_σ，α 按 LOS/NLOS 选择。

    Args:
        d: 距离（米），模型只在 d >= 1 m 时有效
        is_los: 是否 LOS（标量或布尔数组）
        shadowing_db: 阴影衰落（dB）
        params: 信道参数

    Returns:
        路径损耗（dB）

    Raises:
        ValueError: d < 1 m
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 1.0):
        raise ValueError(f"close-in 模型要求 d >= 1 m，实际: {d.min()}")
    alpha = np.where(np.asarray(is_los, dtype=bool), params.alpha_los, params.alpha_nlos)
    fspl_1m = 20.0 * math.log10(4.0 * math.pi / params.wavelength)
    result = fspl_1m + 10.0 * alpha * np.log10(d) + np.asarray(shadowing_db, dtype=float)
    return float(result) if result.ndim == 0 else result


def sample_los(d, beta: float, rng: np.random.Generator):
    """按 LOS 概率做伯努利抽样"""
    p = los_probability(d, beta)
    return rng.random(np.shape(p)) < p


def sample_shadowing(is_los, params: ChannelParams, rng: np.random.Generator):
    """
    对数正态阴影衰落（dB 域零均值正态分布）

    Args:
        is_los: 标量或布尔数组，决定使用 σ_LOS 还是 σ_NLOS
        params: 信道参数
        rng: 随机数生成器

    Returns:
        阴影衰落（dB），形状与 is_los 相同
    """
    is_los = np.asarray(is_los, dtype=bool)
    sigma = np.where(is_los, params.sigma_los_db, params.sigma_nlos_db)
    draw = rng.standard_normal(is_los.shape) * sigma
    return float(draw) if np.ndim(draw) == 0 else draw


def fading_shape(n: float, convention: str) -> float:
    """
    gamma 分布的形状（同时也是速率）参数 q

    'reciprocal' 约定下 q = 1/N（方差为 N），'nakagami' 约定下 q = N（方差为 1/N）。
    """
    if convention == 'reciprocal':
        return 1.0 / n
    if convention == 'nakagami':
        return float(n)
    raise ValueError(f"未知的衰落约定: {convention}")


def sample_fading(is_los, params: ChannelParams, rng: np.random.Generator, size=None):
    """
    Nakagami 功率衰落：形状 q、速率 q 的 gamma 分布，均值为 1

    Args:
        is_los: 标量或布尔数组
        params: 信道参数（使用 n_los/n_nlos 与 fading_convention）
        rng: 随机数生成器
        size: is_los 为标量时可指定样本数量

    Returns:
        正实数衰落增益
    """
    is_los = np.asarray(is_los, dtype=bool)
    q_los = fading_shape(params.n_los, params.fading_convention)
    q_nlos = fading_shape(params.n_nlos, params.fading_convention)
    shape = is_los.shape if size is None else size
    q = np.broadcast_to(np.where(is_los, q_los, q_nlos), shape)
    draw = rng.gamma(q, 1.0 / q)
    return float(draw) if np.ndim(draw) == 0 else draw


def sample_interferer_gain(antenna: AntennaConfig, rng: np.random.Generator, size=None):
    """
    干扰链路的随机阵列增益 D

    AOD 与 AOA 独立均匀分布在 (0, 2π]，落在主瓣内取主瓣增益，否则取旁瓣增益。

    Returns:
        线性增益，取值为 {MtMr, Mtmr, mtMr, mtmr} 之一
    """
    # 1 - U 把 [0, 1) 映射到 (0, 1]
    aod = (1.0 - rng.random(size)) * 2 * math.pi
    aoa = (1.0 - rng.random(size)) * 2 * math.pi
    tx_db = np.where(aod < antenna.beamwidth_tx_rad, antenna.main_gain_tx_db, antenna.side_gain_tx_db)
    rx_db = np.where(aoa < antenna.beamwidth_rx_rad, antenna.main_gain_rx_db, antenna.side_gain_rx_db)
    gain = db_to_linear(tx_db + rx_db)
    return float(gain) if gain.ndim == 0 else gain


def sinr(desired: LinkDraw,
         interferers: Iterable[Tuple[float, float, float, float]],
         noise_w: float,
         antenna: AntennaConfig) -> float:
    """
    链路 SINR

    SINR = P·MtMr·g·l / (σ² + Σ_j P_j·D_j·g_j·l_j)，只有同时激活的发射机计入求和。

    Args:
        desired: 期望链路实现
        interferers: (发射功率, D, g, l) 元组序列
        noise_w: 噪声功率（瓦特）
        antenna: 天线配置

    Returns:
        线性 SINR
    """
    if noise_w <= 0:
        raise ValueError("噪声功率必须大于 0")
    signal = desired.tx_power_w * antenna.desired_gain * desired.fading_gain * desired.path_loss_linear
    interference = math.fsum(p * d * g * l for p, d, g, l in interferers)
    return signal / (noise_w + interference)


def link_capacity(sinr_linear, bandwidth: float):
    """香农容量 bandwidth·log2(1+SINR)（bit/s）"""
    sinr_linear = np.asarray(sinr_linear, dtype=float)
    if np.any(sinr_linear < 0):
        raise ValueError("SINR 不能为负")
    result = bandwidth * np.log2(1.0 + sinr_linear)
    return float(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class ChannelRealization:
    """
    一次蒙特卡洛信道实现

    链路数组按拓扑的链路编号索引；干扰数组形状为 (基站数, 节点数)，
    元素 [j, k] 描述基站 j 到节点 k 的干扰路径（j == k 处无意义，置 0）。
    """
    links: Tuple[Tuple[int, int], ...]
    link_los: np.ndarray
    link_shadowing_db: np.ndarray
    link_path_loss: np.ndarray
    link_fading: np.ndarray
    link_signal_w: np.ndarray
    interferer_los: np.ndarray
    interferer_gain: np.ndarray
    interferer_power_w: np.ndarray
    tx_power_w: np.ndarray
    noise_w: float
    bandwidth: float
    capacities: np.ndarray

    def link_capacity_with(self, link: int, transmitters: Iterable[int]) -> float:
        """给定同时发射的基站集合，计算某条链路的容量"""
        m, k = self.links[link]
        interference = math.fsum(float(self.interferer_power_w[j, k])
                                 for j in transmitters if j != m and j != k)
        ratio = float(self.link_signal_w[link]) / (self.noise_w + interference)
        return link_capacity(ratio, self.bandwidth)

    def activation_capacities(self, activation: Iterable[int]) -> np.ndarray:
        """
        按激活集合计算容量（只有集合内其他链路的发射机产生干扰）

        Returns:
            每条链路的容量数组，未激活链路为 0
        """
        activation = sorted(activation)
        transmitters = [self.links[i][0] for i in activation]
        result = np.zeros(len(self.links))
        for i in activation:
            result[i] = self.link_capacity_with(i, transmitters)
        return result


def potential_interferers(links: Sequence[Tuple[int, int]], num_bs: int):
    """
    保守容量的干扰集合

    对链路 m→k，若基站 j 不是 m 或 k，且 j 至少有一个不同于 m、k 的子节点，
    那么 j 可以在某个匹配中与 m→k 同时发射。

    Returns:
        列表，第 i 个元素为链路 i 的干扰基站编号列表
    """
    children = [[] for _ in range(num_bs)]
    for parent, child in links:
        children[parent].append(child)
    result = []
    for m, k in links:
        result.append([j for j in range(num_bs)
                       if j != m and j != k and any(c != m and c != k for c in children[j])])
    return result


def realize_channel(topology, params: ChannelParams, antenna: AntennaConfig,
                    rng: np.random.Generator,
                    p_mbs_dbm: float = 40.0, p_sbs_dbm: float = 30.0) -> ChannelRealization:
    """
    生成一次信道实现

    回传（基站到基站）链路强制为 LOS；接入链路和所有干扰路径按 LOS 概率随机抽样，
    每条路径独立抽取阴影衰落与衰落。容量默认使用保守干扰集合（见 potential_interferers）。

    Args:
        topology: 网络拓扑（network_topology.Topology）
        params: 信道参数
        antenna: 天线配置
        rng: 随机数生成器
        p_mbs_dbm: MBS 发射功率
        p_sbs_dbm: SBS 发射功率

    Returns:
        ChannelRealization
    """
    positions = topology.positions
    num_bs = topology.num_mbs + topology.num_sbs
    num_nodes = len(topology.nodes)
    links = tuple(topology.links)

    tx_power = np.array([dbm_to_watts(p_mbs_dbm if j < topology.num_mbs else p_sbs_dbm)
                         for j in range(num_bs)])

    # 期望链路
    parents = np.array([m for m, _ in links], dtype=int)
    childs = np.array([k for _, k in links], dtype=int)
    dist = np.maximum(np.linalg.norm(positions[parents] - positions[childs], axis=1), 1.0)
    backhaul = childs < num_bs
    link_los = np.where(backhaul, True, sample_los(dist, params.beta, rng))
    link_shadow = np.asarray(sample_shadowing(link_los, params, rng), dtype=float).reshape(-1)
    link_pl = db_to_linear(-np.asarray(path_loss_db(dist, link_los, link_shadow, params), dtype=float))
    link_fading = np.asarray(sample_fading(link_los, params, rng), dtype=float).reshape(-1)
    link_signal = tx_power[parents] * antenna.desired_gain * link_fading * link_pl

    # 干扰路径：每个基站到每个节点
    diff = positions[:num_bs, None, :] - positions[None, :, :]
    int_dist = np.maximum(np.linalg.norm(diff, axis=2), 1.0)
    int_los = sample_los(int_dist, params.beta, rng)
    int_shadow = sample_shadowing(int_los, params, rng)
    int_pl = db_to_linear(-path_loss_db(int_dist, int_los, int_shadow, params))
    int_fading = sample_fading(int_los, params, rng)
    int_gain = sample_interferer_gain(antenna, rng, size=int_los.shape)
    int_power = tx_power[:, None] * int_gain * int_fading * int_pl
    self_pairs = np.arange(num_bs)
    int_power[self_pairs, self_pairs] = 0.0

    noise_w = params.noise_watts
    interferer_sets = potential_interferers(links, num_bs)
    capacities = np.zeros(len(links))
    for i, (_, k) in enumerate(links):
        interference = math.fsum(float(int_power[j, k]) for j in interferer_sets[i])
        capacities[i] = link_capacity(link_signal[i] / (noise_w + interference), params.bandwidth_per_link)

    logger.debug(
        f"信道实现完成: 链路数={len(links)}, LOS 链路={int(np.sum(link_los))}, "
        f"最小容量={capacities.min() if len(links) else 0:.3e} bit/s"
    )

    return ChannelRealization(
        links=links,
        link_los=np.asarray(link_los, dtype=bool),
        link_shadowing_db=link_shadow,
        link_path_loss=np.asarray(link_pl, dtype=float).reshape(-1),
        link_fading=link_fading,
        link_signal_w=link_signal,
        interferer_los=int_los,
        interferer_gain=int_gain,
        interferer_power_w=int_power,
        tx_power_w=tx_power,
        noise_w=noise_w,
        bandwidth=params.bandwidth_per_link,
        capacities=capacities,
    )
