"""
配置文件管理实用工具

实验配置（ExperimentConfig）的读写。配置按以下顺序查找：
已存在的文件路径、用户目录 ~/.config/sampledrnn/experiments/<name>.json、
包内预置配置 sampledrnn/experiments/<name>.json。
"""

import os
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..core.errors import ConfigError
from ..core.metrics import EKLConfig


# 默认配置目录
CONFIG_DIR = os.path.expanduser("~/.config/sampledrnn")

# 用户实验配置目录
EXPERIMENTS_DIR = os.path.join(CONFIG_DIR, "experiments")

# 包内预置配置目录
PRESET_DIR = Path(__file__).resolve().parent.parent / "experiments"

# 默认随机种子
DEFAULT_SEEDS = [0, 1, 2, 3, 4]


@dataclass
class DataConfig:
    """
    数据生成配置

    值为None的字段取系统插件的数据协议。
    """
    system: str = "vdp"
    params: Dict[str, Any] = field(default_factory=dict)
    source: str = "system"
    n_traj: Optional[int] = None
    n_test_traj: Optional[int] = None
    init_box: Optional[List[List[float]]] = None
    t_end: Optional[float] = None
    test_t_end: Optional[float] = None
    dt: Optional[float] = None
    substeps: Optional[int] = None
    input_law: Optional[str] = None
    input_box: Optional[List[List[float]]] = None
    normalize: Optional[bool] = None
    observed: Optional[List[int]] = None
    seed: int = 0


@dataclass
class ModelConfig:
    """模型超参数"""
    width: int = 80
    input_width: Optional[int] = None
    activation: str = "tanh"
    density: str = "uniform"
    sampling: str = "swim"
    s1: float = 1.0
    s2: float = 0.0
    rcond: float = 1e-8
    bias_in_regression: bool = False
    v_mode: str = "from_states"
    mode: str = "koopman"


@dataclass
class DelaySettings:
    """延迟嵌入设置"""
    delays: int = 1
    pca_components: Optional[int] = None


@dataclass
class PredictionConfig:
    """预测与评价设置：horizon为None时预测整条测试轨迹"""
    horizon: Optional[int] = None
    metric: str = "mse"


@dataclass
class ControlSettings:
    """LQR/MPC设置"""
    Q: List[float] = field(default_factory=lambda: [10.0, 10.0])
    R: List[float] = field(default_factory=lambda: [1.0])
    h0: List[float] = field(default_factory=lambda: [-1.5, -1.0])
    target: List[float] = field(default_factory=lambda: [0.0, 0.0])
    horizon: int = 200
    dare_method: str = "iteration"
    tol: float = 1e-10
    max_iter: int = 10000
    input_bounds: Optional[List[List[float]]] = None


@dataclass
class CsvSettings:
    """通用CSV时间序列导入设置"""
    path: Optional[str] = None
    time_column: str = "date"
    state_columns: List[str] = field(default_factory=list)
    input_columns: List[str] = field(default_factory=list)
    granularities: List[str] = field(default_factory=lambda: ["hour", "day", "month"])
    splits: List[float] = field(default_factory=lambda: [0.7, 0.2, 0.1])
    chunk_horizon: int = 1


@dataclass
class ExperimentConfig:
    """一次实验的完整描述"""
    name: str = "experiment"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    delay: DelaySettings = field(default_factory=DelaySettings)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    control: Optional[ControlSettings] = None
    ekl: EKLConfig = field(default_factory=EKLConfig)
    csv: Optional[CsvSettings] = None
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    output_dir: Optional[str] = None

    @property
    def out_dir(self) -> Path:
        return Path(self.output_dir or os.path.join("runs", self.name))


_NESTED = {
    "data": DataConfig,
    "model": ModelConfig,
    "delay": DelaySettings,
    "prediction": PredictionConfig,
    "control": ControlSettings,
    "ekl": EKLConfig,
    "csv": CsvSettings,
}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"配置项 {where} 应为对象")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"配置项 {where} 包含未知字段: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        nested = _NESTED.get(key) if cls is ExperimentConfig else None
        if nested is not None and value is not None:
            value = _build(nested, value, key)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"配置项 {where} 无效: {e}") from e


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """
    由字典构造实验配置

    Raises:
        ConfigError: 字段未知或取值无效
    """
    return _build(ExperimentConfig, data, "根")


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """实验配置转换为可JSON序列化的字典"""
    return asdict(config)


def ensure_config_dir():
    """确保配置目录存在"""
    if not os.path.exists(EXPERIMENTS_DIR):
        try:
            os.makedirs(EXPERIMENTS_DIR, exist_ok=True)
            return True
        except OSError as e:
            print(f"创建配置目录失败: {e}")
            return False
    return True


def list_configs() -> Dict[str, str]:
    """
    列出可用的实验配置

    Returns:
        Dict[str, str]: 配置名 -> 来源（preset 或 user），用户配置覆盖同名预置配置
    """
    found: Dict[str, str] = {}
    for path in sorted(PRESET_DIR.glob("*.json")):
        found[path.stem] = "preset"
    if os.path.isdir(EXPERIMENTS_DIR):
        for path in sorted(Path(EXPERIMENTS_DIR).glob("*.json")):
            found[path.stem] = "user"
    return found


def resolve_config_path(name_or_path: str) -> Path:
    """
    查找配置文件

    Raises:
        ConfigError: 找不到配置
    """
    candidate = Path(name_or_path).expanduser()
    if candidate.is_file():
        return candidate
    for directory in (Path(EXPERIMENTS_DIR), PRESET_DIR):
        path = directory / f"{name_or_path}.json"
        if path.is_file():
            return path
    names = ", ".join(sorted(list_configs()))
    raise ConfigError(f"未找到配置: {name_or_path}，可选: {names}")


def load_config(name_or_path: str) -> ExperimentConfig:
    """
    加载实验配置

    Args:
        name_or_path: 配置文件路径或配置名

    Returns:
        ExperimentConfig: 实验配置

    Raises:
        ConfigError: 找不到、无法解析或内容无效
    """
    path = resolve_config_path(name_or_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"配置文件 {path} 解析失败: {e}") from e
    data.setdefault("name", path.stem)
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path: Optional[str] = None) -> bool:
    """
    保存实验配置

    Args:
        config: 实验配置
        path: 保存路径，默认保存到用户配置目录下的 <name>.json

    Returns:
        bool: 是否成功保存
    """
    if path is None:
        if not ensure_config_dir():
            return False
        path = os.path.join(EXPERIMENTS_DIR, f"{config.name}.json")
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(config_to_dict(config), f, indent=2, sort_keys=True)
        return True
    except OSError as e:
        print(f"保存实验配置失败: {e}")
        return False
