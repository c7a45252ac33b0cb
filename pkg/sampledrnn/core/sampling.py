"""
隐藏层权重采样模块

根据数据点对构造隐藏层权重和偏置（SWIM采样），或使用与数据无关的高斯基线。
每个神经元由一对点 (h1, h2) 决定：

    w = s1 * (h2 - h1) / ‖h2 - h1‖²,   b = -<w, h1> + s2

因此 <w, h1> + b = s2 且 <w, h2> + b = s1 + s2。
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from .errors import DegenerateDataError, DimensionError, SamplingError

logger = logging.getLogger(__name__)

DENSITIES = ("uniform", "gradient_weighted")

# 点数不超过该值时枚举全部点对，否则随机抽取候选池
FULL_ENUMERATION_LIMIT = 1024
POOL_FACTOR = 1024


def _relu(x):
    return np.maximum(x, 0.0)


def _identity(x):
    return x


ACTIVATIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "tanh": np.tanh,
    "relu": _relu,
    "identity": _identity,
}


def get_activation(name: str) -> Callable[[np.ndarray], np.ndarray]:
    """
    按名称获取激活函数

    Args:
        name: 激活函数名称: tanh, relu, identity

    Returns:
        Callable: 逐元素函数
    """
    if name not in ACTIVATIONS:
        raise ValueError(f"未知激活函数: {name}，可选: {', '.join(ACTIVATIONS)}")
    return ACTIVATIONS[name]


@dataclass(frozen=True)
class SamplingConfig:
    """隐藏层采样配置"""
    width: int
    density: str = "uniform"
    s1: float = 1.0
    s2: float = 0.0
    min_pair_distance: float = 1e-10
    activation: str = "tanh"

    def __post_init__(self):
        if int(self.width) < 1:
            raise ValueError(f"隐藏层宽度必须至少为1: {self.width}")
        if self.density not in DENSITIES:
            raise ValueError(f"未知采样密度: {self.density}")
        if not self.min_pair_distance > 0:
            raise ValueError("min_pair_distance必须为正")
        get_activation(self.activation)


@dataclass(frozen=True)
class SampledLayer:
    """
    采样得到的隐藏层（字典 F_M 或 G_M̂）

    Attributes:
        weights: M×d 权重
        biases: 长度M的偏置
        activation: 激活函数名称
        pair_indices: 可选，M×2 点对在采样数据中的行号
        pair_points: 可选，M×2×d 点对坐标 (h1, h2)
    """
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "tanh"
    pair_indices: Optional[np.ndarray] = None
    pair_points: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.biases, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DimensionError(f"权重形状{w.shape}与偏置形状{b.shape}不匹配")
        get_activation(self.activation)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def has_provenance(self) -> bool:
        return self.pair_points is not None

    @property
    def is_identity(self) -> bool:
        """是否为恒等字典（identity激活、W=I、b=0）"""
        return (self.activation == "identity"
                and self.width == self.input_dim
                and np.array_equal(self.weights, np.eye(self.width))
                and not np.any(self.biases))

    def apply(self, points) -> np.ndarray:
        return apply_layer(self, points)


def apply_layer(layer: SampledLayer, points) -> np.ndarray:
    """
    计算 σ(W p + b)

    Args:
        layer: 隐藏层
        points: *×d 点（也接受单个向量）

    Returns:
        np.ndarray: *×M 特征
    """
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != layer.input_dim:
        raise DimensionError(f"输入维度{points.shape[-1]}与隐藏层输入维度{layer.input_dim}不一致")
    return get_activation(layer.activation)(points @ layer.weights.T + layer.biases)


def identity_layer(dim: int) -> SampledLayer:
    """恒等字典：W=I, b=0, identity激活"""
    return SampledLayer(weights=np.eye(dim), biases=np.zeros(dim), activation="identity")


def layer_streams(seed: int, count: int = 2) -> List[np.random.Generator]:
    """
    从一个根种子派生各层独立的随机数流

    顺序固定：第一个给状态层，第二个给输入层。

    Args:
        seed: 根种子
        count: 流的个数

    Returns:
        List[np.random.Generator]: 随机数生成器列表
    """
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.default_rng(child) for child in children]


def _candidate_pool(n: int, count: int, rng: np.random.Generator):
    if n <= FULL_ENUMERATION_LIMIT:
        i, j = np.triu_indices(n, k=1)
        return i, j
    size = POOL_FACTOR * count
    i = rng.integers(0, n, size=size)
    j = rng.integers(0, n, size=size)
    keep = i != j
    lo, hi = np.minimum(i[keep], j[keep]), np.maximum(i[keep], j[keep])
    # 重复的候选点对只保留一个
    codes = np.unique(lo.astype(np.int64) * n + hi)
    return codes // n, codes % n


def sample_pairs(data, targets, count: int, density: str, rng: np.random.Generator,
                 min_pair_distance: float = 1e-10) -> np.ndarray:
    """
    按给定密度抽取点对

    uniform: 所有合格点对等概率。
    gradient_weighted: 点对概率正比于 ‖t_j - t_i‖ / ‖x_j - x_i‖；
    权重全为零时退回uniform。
    点对不放回抽取，每个神经元来自不同的点对。

    Args:
        data: N×d 数据
        targets: N×k 目标值（gradient_weighted时必需）
        count: 点对个数
        density: 采样密度
        rng: 随机数生成器
        min_pair_distance: 点对最小距离

    Returns:
        np.ndarray: count×2 行号数组，每行 (i, j)，i < j
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionError("data必须是N×d矩阵")
    n = data.shape[0]
    if n < 2:
        raise DegenerateDataError(f"至少需要2个点才能构成点对，实际为{n}")
    if density not in DENSITIES:
        raise ValueError(f"未知采样密度: {density}")
    if density == "gradient_weighted":
        if targets is None:
            raise SamplingError("gradient_weighted采样需要目标值")
        targets = np.asarray(targets, dtype=float).reshape(n, -1)

    i, j = _candidate_pool(n, count, rng)
    dist = np.linalg.norm(data[j] - data[i], axis=1)
    admissible = dist >= min_pair_distance
    if not np.any(admissible):
        raise DegenerateDataError("所有候选点对都是退化的（点重合）")
    i, j, dist = i[admissible], j[admissible], dist[admissible]

    if density == "gradient_weighted":
        weights = np.linalg.norm(targets[j] - targets[i], axis=1) / dist
        if not np.any(weights > 0):
            logger.warning("gradient_weighted权重全为零，退回uniform采样")
            weights = np.ones_like(dist)
    else:
        weights = np.ones_like(dist)

    available = int(np.count_nonzero(weights))
    if count > available:
        raise SamplingError(f"隐藏层宽度{count}超过可用的不同点对数{available}")
    chosen = rng.choice(len(weights), size=count, replace=False, p=weights / weights.sum())
    return np.column_stack([i[chosen], j[chosen]])


def construct_layer(data, pairs, config: SamplingConfig) -> SampledLayer:
    """
    由点对构造隐藏层权重和偏置

    Args:
        data: N×d 数据
        pairs: M×2 点对行号
        config: 采样配置

    Returns:
        SampledLayer: 记录了点对来源的隐藏层
    """
    data = np.asarray(data, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= data.shape[0]):
        raise DimensionError("点对行号超出数据范围")
    h1 = data[pairs[:, 0]]
    h2 = data[pairs[:, 1]]
    delta = h2 - h1
    sq = np.einsum("ij,ij->i", delta, delta)
    if np.any(np.sqrt(sq) < config.min_pair_distance):
        raise DegenerateDataError("存在距离小于阈值的退化点对")

    weights = config.s1 * delta / sq[:, None]
    biases = -np.einsum("ij,ij->i", weights, h1) + config.s2
    return SampledLayer(
        weights=weights,
        biases=biases,
        activation=config.activation,
        pair_indices=pairs.copy(),
        pair_points=np.stack([h1, h2], axis=1),
    )


def sample_layer(data, targets, config: SamplingConfig, rng: np.random.Generator) -> SampledLayer:
    """抽取点对并构造隐藏层（SAMPLE-Layer）"""
    pairs = sample_pairs(data, targets, config.width, config.density, rng,
                         min_pair_distance=config.min_pair_distance)
    return construct_layer(data, pairs, config)


def gaussian_layer(d: int, width: int, rng: np.random.Generator,
                   activation: str = "tanh") -> SampledLayer:
    """
    与数据无关的基线：权重标准正态，偏置在[-1, 1]上均匀分布

    Args:
        d: 输入维度
        width: 神经元个数
        rng: 随机数生成器
        activation: 激活函数名称

    Returns:
        SampledLayer: 没有点对来源的隐藏层
    """
    if d < 1 or width < 1:
        raise ValueError(f"输入维度和宽度必须至少为1: d={d}, width={width}")
    weights = rng.standard_normal((width, d))
    biases = rng.uniform(-1.0, 1.0, size=width)
    return SampledLayer(weights=weights, biases=biases, activation=activation)


def pairs_frame(layer: SampledLayer) -> pd.DataFrame:
    """
    点对来源表，列为 neuron_index, i, j, h1_1.., h2_1..

    Returns:
        pd.DataFrame: 每个神经元一行
    """
    if not layer.has_provenance:
        raise SamplingError("该隐藏层没有点对来源（例如高斯采样）")
    d = layer.input_dim
    frame = pd.DataFrame({"neuron_index": np.arange(layer.width)})
    if layer.pair_indices is not None:
        frame["i"] = layer.pair_indices[:, 0]
        frame["j"] = layer.pair_indices[:, 1]
    for k in range(d):
        frame[f"h1_{k + 1}"] = layer.pair_points[:, 0, k]
    for k in range(d):
        frame[f"h2_{k + 1}"] = layer.pair_points[:, 1, k]
    return frame


def export_pairs_csv(layer: SampledLayer, path) -> None:
    """把点对来源写入CSV，供外部绘制箭头图"""
    pairs_frame(layer).to_csv(path, index=False, float_format="%.17g")
