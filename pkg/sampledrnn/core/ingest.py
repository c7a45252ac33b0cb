"""
通用CSV时间序列导入

按时间顺序切分为训练/验证/测试三段，追加日历sin/cos特征，
缩放和PCA只在训练段上拟合，延迟嵌入在每一段内部进行，窗口不跨越切分边界。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dynamics import RangeScaler, Trajectory, TrajectoryDataset, fit_scaler
from .embedding import DelayConfig, delay_embed, embed_dataset, time_feature_names, time_features
from .errors import ConfigError, DimensionError, EmbeddingError
from .koopman_rnn import SampledRNN, predict_batch
from .numkit import PCAModel

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class CsvSchema:
    """
    CSV列的角色

    Attributes:
        time_column: 时间列
        state_columns: 作为状态的观测列
        input_columns: 作为外部输入的列
        granularities: 追加的时间特征粒度
        splits: 训练/验证/测试比例
    """
    time_column: str
    state_columns: Sequence[str]
    input_columns: Sequence[str] = ()
    granularities: Sequence[str] = ("hour", "day", "month")
    splits: Tuple[float, float, float] = (0.7, 0.2, 0.1)

    def __post_init__(self):
        if len(self.splits) != 3 or any(f < 0 for f in self.splits):
            raise ConfigError(f"切分比例无效: {self.splits}")
        if abs(sum(self.splits) - 1.0) > 1e-9:
            raise ConfigError(f"切分比例之和必须为1: {self.splits}")
        if not self.state_columns:
            raise ConfigError("至少需要一个状态列")


@dataclass
class IngestResult:
    """导入结果：三段数据集（模型坐标）以及各段的原始特征行和输入行"""
    train: TrajectoryDataset
    validation: TrajectoryDataset
    test: TrajectoryDataset
    feature_names: List[str]
    raw: Dict[str, np.ndarray]
    timestamps: Dict[str, pd.DatetimeIndex]
    raw_inputs: Dict[str, Optional[np.ndarray]] = field(default_factory=dict)
    scaler: Optional[RangeScaler] = None
    pca: Optional[PCAModel] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def split(self, name: str) -> TrajectoryDataset:
        return getattr(self, name)


def split_bounds(n_rows: int, fractions: Sequence[float]) -> List[Tuple[int, int]]:
    """
    连续的时间顺序切分

    训练段和验证段取 floor(n·f)，剩余行归入测试段。

    Returns:
        List[Tuple[int, int]]: 三段的 [start, stop)
    """
    n_train = int(np.floor(n_rows * fractions[0] + 1e-9))
    n_val = int(np.floor(n_rows * fractions[1] + 1e-9))
    return [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n_rows)]


def _read_frame(path, schema: CsvSchema) -> Tuple[pd.DataFrame, pd.DatetimeIndex]:
    frame = pd.read_csv(path, float_precision="round_trip")
    required = [schema.time_column, *schema.state_columns, *schema.input_columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ConfigError(f"CSV缺少列: {', '.join(missing)}")
    try:
        stamps = pd.DatetimeIndex(pd.to_datetime(frame[schema.time_column]))
    except (ValueError, TypeError) as e:
        raise EmbeddingError(f"无法解析时间列 {schema.time_column}: {e}") from e
    if not stamps.is_monotonic_increasing or stamps.has_duplicates:
        raise EmbeddingError("时间列必须严格递增")
    return frame, stamps


def ingest_csv(path, schema: CsvSchema, delay: DelayConfig = DelayConfig(),
               normalize: bool = True) -> IngestResult:
    """
    导入CSV时间序列

    每段得到一条轨迹，时间以记录序号计（dt = 1）。状态为观测列加时间特征列。

    Args:
        path: CSV路径
        schema: 列角色
        delay: 延迟嵌入与PCA配置
        normalize: 是否在训练段上拟合 [-3, 3] 缩放

    Returns:
        IngestResult: 三段数据集
    """
    frame, stamps = _read_frame(path, schema)
    observed = frame[list(schema.state_columns)].to_numpy(dtype=float)
    features = time_features(stamps, schema.granularities)
    rows = np.hstack([observed, features])
    names = list(schema.state_columns) + time_feature_names(schema.granularities)
    inputs = frame[list(schema.input_columns)].to_numpy(dtype=float) if schema.input_columns else None
    if not np.all(np.isfinite(rows)):
        raise EmbeddingError("状态列中存在缺失或非有限值")

    bounds = split_bounds(len(frame), schema.splits)
    raw: Dict[str, np.ndarray] = {}
    raw_inputs: Dict[str, Optional[np.ndarray]] = {}
    splits: Dict[str, TrajectoryDataset] = {}
    for name, (start, stop) in zip(SPLIT_NAMES, bounds):
        segment = rows[start:stop]
        raw[name] = segment
        raw_inputs[name] = None if inputs is None else inputs[start:stop - 1]
        traj = Trajectory(
            times=np.arange(start, stop, dtype=float),
            states=segment,
            inputs=raw_inputs[name],
        )
        splits[name] = TrajectoryDataset([traj], dt=1.0, meta={"split": name, "rows": [start, stop]})

    scaler = None
    if normalize:
        scaler = fit_scaler(splits["train"])
        splits = {name: scaler.apply_dataset(ds) for name, ds in splits.items()}

    train, pca = embed_dataset(splits["train"], delay)
    validation, _ = embed_dataset(splits["validation"], delay, pca=pca)
    test, _ = embed_dataset(splits["test"], delay, pca=pca)
    logger.info("导入CSV: %d行, 切分 %s, 特征 %d", len(frame),
                [stop - start for start, stop in bounds], len(names))
    return IngestResult(
        train=train, validation=validation, test=test, feature_names=names, raw=raw,
        raw_inputs=raw_inputs,
        timestamps={name: stamps[start:stop] for name, (start, stop) in zip(SPLIT_NAMES, bounds)},
        scaler=scaler, pca=pca,
        meta={"source": str(path), "features": names, "delays": delay.delays,
              "pca_components": delay.pca_components},
    )


def chunked_horizon_predict(model: SampledRNN, series, L: int, P: int,
                            inputs=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    分块预测：长度L的真值窗口作为初值，闭环预测P步，窗口每次前移P

    series为未缩放的特征行；模型带有缩放器或PCA时在内部完成编码与解码，
    预测结果取嵌入向量中最新的一块并还原到原始坐标。
    有输入模型使用与行对齐的输入：第t行的输入驱动第t行到第t+1行。

    Args:
        model: 模型（状态维度为 L·d 或PCA维度）
        series: T×d 特征行，一维序列视为 T×1
        L: 延迟窗口长度
        P: 每次预测的步数
        inputs: 有输入模型的输入行，至少 T-1 行

    Returns:
        Tuple[np.ndarray, np.ndarray]: 预测 (n×d) 与对应的行号 (n,)
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series.reshape(-1, 1)
    T, d = series.shape
    if P < 0:
        raise ValueError(f"预测步数不能为负: {P}")
    if P == 0:
        return np.zeros((0, d)), np.zeros(0, dtype=int)
    if T < L + P:
        raise EmbeddingError(f"序列长度{T}小于 L + P = {L + P}")
    if model.is_controlled:
        if inputs is None:
            raise DimensionError("有输入模型的分块预测需要输入序列")
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        if inputs.shape[0] < T - 1:
            raise DimensionError(f"输入只有{inputs.shape[0]}行，至少需要{T - 1}行")
    elif inputs is not None:
        raise DimensionError("模型没有输入字典，不能传入输入序列")

    coded = series if model.scaler is None else model.scaler.apply(series)
    starts = np.arange(0, T - L - P + 1, P)
    seeds = np.stack([delay_embed(coded[k:k + L], L)[0] for k in starts])
    if model.pca is not None:
        seeds = model.pca.transform(seeds)
    windows = None
    if inputs is not None:
        windows = np.stack([inputs[k + L - 1:k + L - 1 + P] for k in starts])
    result = predict_batch(model, seeds, P, windows)
    states = result.states.reshape(-1, result.states.shape[-1])
    if model.pca is not None:
        states = model.pca.inverse_transform(states)
    newest = states[:, -d:]
    if model.scaler is not None:
        newest = model.scaler.invert(newest)
    indices = (starts[:, None] + L + np.arange(P)[None, :]).ravel()
    return newest, indices
