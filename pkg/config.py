"""
配置管理模块

提供 IAB 网络仿真的配置加载、验证和管理功能。
支持从 YAML 文件读取配置，并与默认配置合并；空配置即为基准场景
（28 GHz、100 MHz、P_SBS=30 dBm、P_MBS=40 dBm、β=0.01 等）。
"""

import copy
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import yaml

from channel_model import AntennaConfig, ChannelParams
from network_topology import ASSOCIATION_METRICS, DeploymentConfig


logger = logging.getLogger('IABSim.config')

MODES = ('iab', 'macro_only')
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

# 默认配置
DEFAULT_CONFIG = {
    'deployment': {
        'area_side_m': 400.0,
        'num_mbs': 1,
        'num_sbs': 2,
        'num_users': 10,
        'degree_cap': 2,
        'mbs_layout': 'auto',
        'mbs_positions': [],
    },
    'channel': {
        'carrier_frequency_hz': 28e9,
        'bandwidth_hz': 100e6,
        'alpha_los': 2.0,
        'alpha_nlos': 3.3,
        'sigma_los_db': 3.6,
        'sigma_nlos_db': 9.7,
        'beta': 0.01,  # 每米
        'n_los': 3,
        'n_nlos': 2,
        'noise_psd_dbm_hz': -174.0,
        'noise_figure_db': 0.0,
        'fading_convention': 'reciprocal',
        'capacity_mode': 'per_activation',
    },
    'antenna': {
        'main_gain_tx_db': 10.0,
        'side_gain_tx_db': -10.0,
        'main_gain_rx_db': 10.0,
        'side_gain_rx_db': -10.0,
        'beamwidth_tx_deg': 30.0,
        'beamwidth_rx_deg': 90.0,
    },
    'power': {
        'p_mbs_dbm': 40.0,
        'p_sbs_dbm': 30.0,
    },
    'association': {
        'metric': 'rx_power',
    },
    'optimizer': {
        'tolerance': 1e-9,
        'max_iterations': None,  # 缺省为 10·(R+K)
    },
    'experiment': {
        'trials': 1000,
        'base_seed': 0,
        'mode': 'iab',
        'fixed_deployment': False,
        'workers': 1,
    },
    'sweep': {
        'parameter': '',
        'values': [],
    },
    'logging': {
        'level': 'INFO',
        'console': True,
        'file': '',
        'max_bytes': 10485760,  # 10MB
        'backup_count': 5,
    },
}

# 取值为数值的配置项（可作为扫描参数）
NUMERIC_KEYS = {
    'deployment': ('area_side_m', 'num_mbs', 'num_sbs', 'num_users', 'degree_cap'),
    'channel': ('carrier_frequency_hz', 'bandwidth_hz', 'alpha_los', 'alpha_nlos', 'sigma_los_db',
                'sigma_nlos_db', 'beta', 'n_los', 'n_nlos', 'noise_psd_dbm_hz', 'noise_figure_db'),
    'antenna': ('main_gain_tx_db', 'side_gain_tx_db', 'main_gain_rx_db', 'side_gain_rx_db',
                'beamwidth_tx_deg', 'beamwidth_rx_deg'),
    'power': ('p_mbs_dbm', 'p_sbs_dbm'),
    'optimizer': ('tolerance',),
}

INTEGER_KEYS = {
    'deployment': ('num_mbs', 'num_sbs', 'num_users', 'degree_cap'),
    'experiment': ('trials', 'base_seed', 'workers'),
    'logging': ('max_bytes', 'backup_count'),
}

SWEEPABLE_PARAMETERS = tuple(f"{section}.{key}" for section, keys in NUMERIC_KEYS.items()
                             for key in keys if section != 'optimizer')


def deep_merge(base: Dict, override: Dict) -> Dict:
    """
    深度合并两个字典，override 中的值会覆盖 base 中的对应值

    Args:
        base: 基础字典
        override: 覆盖字典

    Returns:
        Dict: 合并后的新字典
    """
    result = copy.deepcopy(base)

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            # 递归合并嵌套字典
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)

    return result


def load_config(config_file: Optional[str] = None) -> Dict[str, Any]:
    """
    从 YAML 文件加载配置

    首先加载默认配置，然后从指定的 YAML 文件读取用户配置并合并。
    未指定文件、文件不存在或文件为空时返回默认配置。

    Args:
        config_file: 配置文件路径

    Returns:
        Dict: 合并后的配置字典

    Raises:
        ValueError: YAML 格式错误（消息中包含行号）或顶层不是映射
        IOError: 文件读取错误
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    if not config_file:
        return config

    if not os.path.exists(config_file):
        logger.info(f"配置文件不存在，使用默认配置: {config_file}")
        return config

    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            user_config = yaml.safe_load(f)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark is not None else '?'
        raise ValueError(f"配置文件格式错误（第 {line} 行）: {e.problem or e}")
    except yaml.YAMLError as e:
        raise ValueError(f"配置文件格式错误: {e}")
    except IOError as e:
        raise IOError(f"无法读取配置文件: {e}")

    if not user_config:
        logger.info(f"配置文件为空，使用默认配置: {config_file}")
        return config
    if not isinstance(user_config, dict):
        raise ValueError("配置文件顶层必须是映射（section: {key: value}）")

    logger.info(f"已加载配置文件: {config_file}")
    return deep_merge(config, user_config)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _require(condition: bool, message: str):
    if not condition:
        raise ValueError(message)


def validate_config(config: Dict[str, Any]) -> bool:
    """
    验证配置的完整性和合理性

    Args:
        config: 要验证的配置字典

    Returns:
        bool: 配置是否有效

    Raises:
        ValueError: 未知配置项、类型错误或取值违反约束（消息中给出违反的约束）
    """
    # 检查配置节与配置项
    for section, values in config.items():
        if section not in DEFAULT_CONFIG:
            raise ValueError(f"未知的配置节: {section}")
        if not isinstance(values, dict):
            raise ValueError(f"配置节 {section} 必须是映射")
        for key in values:
            if key not in DEFAULT_CONFIG[section]:
                raise ValueError(f"未知的配置项: {section}.{key}")
    for section in DEFAULT_CONFIG:
        _require(section in config, f"缺少必需的配置节: {section}")

    # 类型检查
    for section, keys in NUMERIC_KEYS.items():
        for key in keys:
            _require(_is_number(config[section][key]), f"{section}.{key} 必须是数值")
    for section, keys in INTEGER_KEYS.items():
        for key in keys:
            value = config[section][key]
            _require(isinstance(value, int) and not isinstance(value, bool), f"{section}.{key} 必须是整数")

    # 部署
    deployment = config['deployment']
    _require(deployment['area_side_m'] > 0, "deployment.area_side_m 必须 > 0")
    _require(deployment['num_mbs'] >= 1, "deployment.num_mbs 必须 >= 1")
    _require(deployment['num_sbs'] >= 0, "deployment.num_sbs 必须 >= 0")
    _require(deployment['num_users'] >= 1, "deployment.num_users 必须 >= 1")
    _require(deployment['degree_cap'] >= 1, "deployment.degree_cap 必须 >= 1")
    positions = deployment['mbs_positions']
    _require(isinstance(positions, list) and all(
        isinstance(p, (list, tuple)) and len(p) == 2 and all(_is_number(v) for v in p) for p in positions),
        "deployment.mbs_positions 必须是 [x, y] 坐标列表")

    # 信道
    channel = config['channel']
    _require(channel['carrier_frequency_hz'] > 0, "channel.carrier_frequency_hz 必须 > 0")
    _require(channel['bandwidth_hz'] > 0, "channel.bandwidth_hz 必须 > 0")
    _require(channel['beta'] >= 0, "channel.beta 必须 >= 0")
    _require(channel['alpha_los'] >= 1 and channel['alpha_nlos'] >= 1, "channel.alpha_los/alpha_nlos 必须 >= 1")
    _require(channel['sigma_los_db'] >= 0 and channel['sigma_nlos_db'] >= 0,
             "channel.sigma_los_db/sigma_nlos_db 必须 >= 0")
    _require(channel['n_los'] >= 1 and channel['n_nlos'] >= 1, "channel.n_los/n_nlos 必须 >= 1")

    # 天线
    antenna = config['antenna']
    _require(antenna['main_gain_tx_db'] >= antenna['side_gain_tx_db'],
             "antenna.main_gain_tx_db 必须 >= antenna.side_gain_tx_db")
    _require(antenna['main_gain_rx_db'] >= antenna['side_gain_rx_db'],
             "antenna.main_gain_rx_db 必须 >= antenna.side_gain_rx_db")
    for key in ('beamwidth_tx_deg', 'beamwidth_rx_deg'):
        _require(0 < antenna[key] <= 360, f"antenna.{key} 必须在 (0, 360] 之内")

    # 关联与优化
    _require(config['association']['metric'] in ASSOCIATION_METRICS,
             f"association.metric 必须是以下之一: {', '.join(ASSOCIATION_METRICS)}")
    optimizer = config['optimizer']
    _require(optimizer['tolerance'] > 0, "optimizer.tolerance 必须 > 0")
    max_iterations = optimizer['max_iterations']
    _require(max_iterations is None or (isinstance(max_iterations, int) and not isinstance(max_iterations, bool)
                                        and max_iterations >= 1),
             "optimizer.max_iterations 必须为空或 >= 1 的整数")

    # 实验
    experiment = config['experiment']
    _require(experiment['trials'] >= 1, "experiment.trials 必须 >= 1")
    _require(experiment['base_seed'] >= 0, "experiment.base_seed 必须 >= 0")
    _require(experiment['workers'] >= 1, "experiment.workers 必须 >= 1")
    _require(experiment['mode'] in MODES, f"experiment.mode 必须是以下之一: {', '.join(MODES)}")
    _require(isinstance(experiment['fixed_deployment'], bool), "experiment.fixed_deployment 必须是布尔值")

    # 扫描
    sweep = config['sweep']
    parameter = sweep['parameter'] or ''
    _require(isinstance(parameter, str), "sweep.parameter 必须是字符串")
    if parameter:
        _require(parameter in SWEEPABLE_PARAMETERS, f"扫描参数 {parameter} 不存在或不可扫描")
    _require(isinstance(sweep['values'], list) and all(_is_number(v) for v in sweep['values']),
             "sweep.values 必须是数值列表")

    # 日志
    logging_config = config['logging']
    _require(logging_config['level'] in LOG_LEVELS, f"日志级别必须是以下之一: {', '.join(LOG_LEVELS)}")
    _require(isinstance(logging_config['console'], bool), "logging.console 必须是布尔值")
    _require(isinstance(logging_config['file'] or '', str), "logging.file 必须是字符串")

    return True


def save_default_config(config_file: str = 'config.yaml'):
    """
    将默认配置保存到 YAML 文件

    用于生成配置文件模板。

    Args:
        config_file: 目标配置文件路径
    """
    try:
        with open(config_file, 'w', encoding='utf-8') as f:
            yaml.safe_dump(DEFAULT_CONFIG, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
    except IOError as e:
        raise IOError(f"无法写入配置文件: {e}")
    logger.info(f"默认配置已保存到: {config_file}")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    一个仿真场景的全部参数

    source 保存验证过的原始配置字典，用于派生覆盖了单个参数的新场景。
    """
    deployment: DeploymentConfig
    channel: ChannelParams
    antenna: AntennaConfig
    p_mbs_dbm: float = 40.0
    p_sbs_dbm: float = 30.0
    association_metric: str = 'rx_power'
    tolerance: float = 1e-9
    max_iterations: Optional[int] = None
    trials: int = 1000
    base_seed: int = 0
    mode: str = 'iab'
    fixed_deployment: bool = False
    workers: int = 1
    sweep_parameter: str = ''
    sweep_values: Tuple[float, ...] = ()
    source: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def logging(self) -> Dict[str, Any]:
        return self.source.get('logging', DEFAULT_CONFIG['logging'])

    def with_override(self, parameter: str, value) -> 'ScenarioConfig':
        """
        返回覆盖了单个参数（'section.key'）的新场景，并重新验证

        Raises:
            ValueError: 参数名不存在或新值违反约束
        """
        section, _, key = parameter.partition('.')
        if section not in DEFAULT_CONFIG or key not in DEFAULT_CONFIG[section]:
            raise ValueError(f"未知的配置项: {parameter}")
        return build_scenario(deep_merge(self.source or DEFAULT_CONFIG, {section: {key: value}}))

    def get(self, parameter: str):
        section, _, key = parameter.partition('.')
        return (self.source or DEFAULT_CONFIG)[section][key]


def build_scenario(config: Dict[str, Any]) -> ScenarioConfig:
    """
    由配置字典构建 ScenarioConfig

    Raises:
        ValueError: 配置无效
    """
    validate_config(config)
    d, c, a = config['deployment'], config['channel'], config['antenna']
    deployment = DeploymentConfig(
        area_side=float(d['area_side_m']),
        num_mbs=d['num_mbs'],
        num_sbs=d['num_sbs'],
        num_users=d['num_users'],
        degree_cap=d['degree_cap'],
        mbs_layout=d['mbs_layout'],
        mbs_positions=tuple((float(x), float(y)) for x, y in d['mbs_positions']),
    )
    channel = ChannelParams(
        carrier_frequency=float(c['carrier_frequency_hz']),
        bandwidth_per_link=float(c['bandwidth_hz']),
        alpha_los=float(c['alpha_los']),
        alpha_nlos=float(c['alpha_nlos']),
        sigma_los_db=float(c['sigma_los_db']),
        sigma_nlos_db=float(c['sigma_nlos_db']),
        beta=float(c['beta']),
        n_los=float(c['n_los']),
        n_nlos=float(c['n_nlos']),
        noise_psd_dbm_hz=float(c['noise_psd_dbm_hz']),
        noise_figure_db=float(c['noise_figure_db']),
        fading_convention=c['fading_convention'],
        capacity_mode=c['capacity_mode'],
    )
    antenna = AntennaConfig(
        main_gain_tx_db=float(a['main_gain_tx_db']),
        side_gain_tx_db=float(a['side_gain_tx_db']),
        main_gain_rx_db=float(a['main_gain_rx_db']),
        side_gain_rx_db=float(a['side_gain_rx_db']),
        beamwidth_tx_rad=math.radians(a['beamwidth_tx_deg']),
        beamwidth_rx_rad=math.radians(a['beamwidth_rx_deg']),
    )
    experiment = config['experiment']
    return ScenarioConfig(
        deployment=deployment,
        channel=channel,
        antenna=antenna,
        p_mbs_dbm=float(config['power']['p_mbs_dbm']),
        p_sbs_dbm=float(config['power']['p_sbs_dbm']),
        association_metric=config['association']['metric'],
        tolerance=float(config['optimizer']['tolerance']),
        max_iterations=config['optimizer']['max_iterations'],
        trials=experiment['trials'],
        base_seed=experiment['base_seed'],
        mode=experiment['mode'],
        fixed_deployment=experiment['fixed_deployment'],
        workers=experiment['workers'],
        sweep_parameter=config['sweep']['parameter'] or '',
        sweep_values=tuple(config['sweep']['values']),
        source=copy.deepcopy(config),
    )


def parse_config(config_file: Optional[str] = None) -> ScenarioConfig:
    """
    加载、验证并构建场景配置

    Args:
        config_file: YAML 配置文件路径，为空时使用默认配置

    Returns:
        ScenarioConfig
    """
    return build_scenario(load_config(config_file))


if __name__ == '__main__':
    # 生成默认配置文件，或加载并验证配置
    import sys

    if len(sys.argv) > 1 and sys.argv[1] == '--generate':
        output_file = sys.argv[2] if len(sys.argv) > 2 else 'config.yaml'
        save_default_config(output_file)
    else:
        config = load_config(sys.argv[1] if len(sys.argv) > 1 else None)
        try:
            validate_config(config)
            print("配置验证通过")
            print("\n当前配置:")
            print(yaml.safe_dump(config, default_flow_style=False, allow_unicode=True, sort_keys=False))
        except ValueError as e:
            print(f"配置验证失败: {e}")
