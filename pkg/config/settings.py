"""
配置加载

``config/defaults.yaml`` 中的每个分组映射为一个冻结的 dataclass；YAML 中使用连字符命名，
加载时转换为下划线。
"""
import os
import logging
import dataclasses
from dataclasses import dataclass, field, replace, asdict
from typing import Dict, Optional, Tuple

import yaml  # type: ignore

from config.errors import ConfigError

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'defaults.yaml')

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneConfig:
    table_extent: float = 0.6
    grid_mpp: float = 0.001
    noise_sd: float = 0.001
    dropout: float = 0.02
    march_steps: int = 48
    bisect_steps: int = 30


@dataclass(frozen=True)
class CameraConfig:
    width: int = 512
    height: int = 424
    fx: float = 365.0
    fy: float = 365.0
    cx: float = 256.0
    cy: float = 212.0
    mount_height: float = 1.06
    tilt_deg: float = 23.5


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 3
    threshold: float = 0.003
    max_candidates: int = 64


@dataclass(frozen=True)
class GripConfig:
    tau_p_mm: float = 5.0
    prominence_window: float = 0.11
    crop_side: float = 0.11
    crop_px: int = 64
    angle_noise_deg: float = 5.0
    n_sensors: int = 5
    min_frames: int = 10
    max_frames: int = 25
    gel_mm: float = 2.5


@dataclass(frozen=True)
class TactileConfig:
    width: int = 64
    height: int = 48
    sensing_width_mm: float = 18.6
    sensing_height_mm: float = 14.0
    detect_depth_mm: float = 0.1
    detect_area: float = 0.03
    n_frames: int = 9
    frame_step: int = 1

    @property
    def mm_per_px(self) -> float:
        return self.sensing_width_mm / self.width


@dataclass(frozen=True)
class BankSection:
    sigmas: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    n_orientations: int = 6
    contact_threshold: float = 0.05
    cells: int = 2


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 32
    epochs: int = 200
    weight_decay: float = 1e-4
    aug_amplitude: float = 0.05
    augment: bool = True
    class_weighting: bool = False
    head_weights: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class GripTrainConfig:
    lr: float = 0.05
    batch_size: int = 32
    epochs: int = 200
    weight_decay: float = 1e-4


@dataclass(frozen=True)
class ExploreConfig:
    confidence_head: str = 'wash_method'
    threshold: float = 0.75
    max_retries: int = 5
    reuse_radius: float = 0.02
    grips_per_item: int = 5
    ranking: str = 'grip_model'
    sensor_id: int = 5


@dataclass(frozen=True)
class CorpusConfig:
    items: int = 60
    test_ratio: float = 0.2
    grips_per_item: int = 10
    iteration_ratio: float = 0.85
    split_name: str = 'default'


_SECTIONS = {
    'scene': SceneConfig,
    'camera': CameraConfig,
    'pyramid': PyramidConfig,
    'grip': GripConfig,
    'tactile': TactileConfig,
    'bank': BankSection,
    'model': ModelConfig,
    'train': TrainConfig,
    'grip_train': GripTrainConfig,
    'explore': ExploreConfig,
    'corpus': CorpusConfig,
}


@dataclass(frozen=True)
class Settings:
    """全部配置分组的集合"""
    scene: SceneConfig = field(default_factory=SceneConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    grip: GripConfig = field(default_factory=GripConfig)
    tactile: TactileConfig = field(default_factory=TactileConfig)
    bank: BankSection = field(default_factory=BankSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grip_train: GripTrainConfig = field(default_factory=GripTrainConfig)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)

    def override(self, **dotted) -> 'Settings':
        """
        返回修改后的副本

        :param dotted: 形如 ``explore__threshold=0.8`` 的键值（``__`` 分隔分组与字段），
            也接受 ``{'explore.threshold': 0.8}`` 形式的字典展开
        :return: 新的 Settings
        :rtype: Settings
        """
        updates: Dict[str, Dict[str, object]] = {}
        for key, value in dotted.items():
            if value is None:
                continue
            section, sep, name = key.replace('.', '__').partition('__')
            if not sep or section not in _SECTIONS:
                raise ConfigError(f"Unknown setting '{key}'")
            valid = {f.name for f in dataclasses.fields(_SECTIONS[section])}
            if name not in valid:
                raise ConfigError(f"Unknown setting '{key}'")
            updates.setdefault(section, {})[name] = value
        changed = {section: replace(getattr(self, section), **values) for section, values in updates.items()}
        return replace(self, **changed)

    def to_dict(self) -> dict:
        out = {}
        for section in _SECTIONS:
            values = asdict(getattr(self, section))
            out[section.replace('_', '-')] = {
                k.replace('_', '-'): list(v) if isinstance(v, tuple) else v for k, v in values.items()
            }
        return out

    def dump(self, path: str) -> None:
        """把生效的配置写入 YAML 文件"""
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)


def _build_section(section: str, raw: dict):
    cls = _SECTIONS[section]
    valid = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for key, value in (raw or {}).items():
        name = key.replace('-', '_')
        if name not in valid:
            raise ConfigError(f"Unknown key '{key}' in section '{section}'")
        if isinstance(value, list):
            value = tuple(value)
        values[name] = value
    return cls(**values)


def load_settings(path: Optional[str] = None) -> Settings:
    """
    读取 YAML 配置

    :param path: 配置文件路径，默认使用 ``config/defaults.yaml``
    :type path: str
    :return: 配置集合
    :rtype: Settings
    """
    path = path or DEFAULT_CONFIG_PATH
    with open(path, 'r') as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file '{path}' must contain a mapping")

    sections = {}
    for key, value in raw.items():
        section = key.replace('-', '_')
        if section not in _SECTIONS:
            raise ConfigError(f"Unknown config section '{key}'")
        sections[section] = _build_section(section, value)
    logger.debug("Loaded settings from %s", path)
    return Settings(**sections)


_LEVELS = {'0': logging.WARNING, '1': logging.INFO, '2': logging.DEBUG, '3': logging.DEBUG}


def log_level_from_env(value: Optional[str] = None) -> int:
    """把 ``TE_LOG`` 的取值（级别名或 0-3）转换为 logging 级别"""
    value = os.environ.get('TE_LOG', 'INFO') if value is None else value
    value = value.strip()
    if value in _LEVELS:
        return _LEVELS[value]
    level = logging.getLevelName(value.upper())
    if isinstance(level, int):
        return level
    raise ConfigError(f"Invalid TE_LOG value '{value}'")


def setup_logging(value: Optional[str] = None) -> int:
    """按 ``TE_LOG`` 配置根日志器，返回生效的级别"""
    level = log_level_from_env(value)
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        force=True,
    )
    return level
