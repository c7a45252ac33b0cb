"""
时间延迟嵌入模块

由部分观测重构状态：逐轨迹做延迟嵌入（窗口按时间从旧到新拼接），
可选地再做PCA降维；另外提供日历时间的sin/cos特征。
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .dynamics import Trajectory, TrajectoryDataset
from .errors import EmbeddingError
from .numkit import PCAModel, pca_fit

logger = logging.getLogger(__name__)

GRANULARITIES = ("hour", "day", "month")


@dataclass(frozen=True)
class DelayConfig:
    """延迟嵌入配置：窗口长度L，可选PCA主成分个数k"""
    delays: int = 1
    pca_components: Optional[int] = None

    def __post_init__(self):
        if self.delays < 1:
            raise ValueError(f"延迟窗口长度必须至少为1: {self.delays}")
        if self.pca_components is not None and self.pca_components < 1:
            raise ValueError(f"PCA主成分个数必须至少为1: {self.pca_components}")

    @property
    def is_identity(self) -> bool:
        return self.delays == 1 and self.pca_components is None


def delay_embed(series, L: int) -> np.ndarray:
    """
    延迟嵌入

    第t行为 (series[t], series[t+1], ..., series[t+L-1]) 的拼接。

    Args:
        series: T×d 序列（也接受长度T的一维序列）
        L: 窗口长度

    Returns:
        np.ndarray: (T-L+1)×(L·d) 嵌入
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    T, d = series.shape
    if L < 1:
        raise EmbeddingError(f"窗口长度必须至少为1: {L}")
    if T < L:
        raise EmbeddingError(f"序列长度{T}小于窗口长度{L}")
    # sliding_window_view的形状为 (T-L+1, d, L)
    windows = sliding_window_view(series, L, axis=0)
    return np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(T - L + 1, L * d))


def _embed_trajectory(traj: Trajectory, L: int) -> Trajectory:
    return Trajectory(
        times=traj.times[L - 1:].copy(),
        states=delay_embed(traj.states, L),
        inputs=None if traj.inputs is None else traj.inputs[L - 1:].copy(),
        outputs=None if traj.outputs is None else traj.outputs[L - 1:].copy(),
    )


def embed_dataset(dataset: TrajectoryDataset, cfg: DelayConfig,
                  pca: Optional[PCAModel] = None) -> Tuple[TrajectoryDataset, Optional[PCAModel]]:
    """
    逐轨迹延迟嵌入，并可选PCA降维

    PCA只在训练数据上拟合：验证/测试数据应传入训练集得到的pca，
    此时不会重新估计均值和主成分。

    Args:
        dataset: 原始数据集
        cfg: 嵌入配置
        pca: 已拟合的PCA模型（用于验证/测试数据）

    Returns:
        Tuple[TrajectoryDataset, Optional[PCAModel]]: 嵌入后的数据集和PCA模型
    """
    L = cfg.delays
    for n, traj in enumerate(dataset.trajectories):
        if len(traj) < L + 1:
            raise EmbeddingError(f"轨迹{n}长度{len(traj)}不足{L + 1}")
    if cfg.is_identity and pca is None:
        return dataset, None

    trajectories: List[Trajectory] = [_embed_trajectory(t, L) for t in dataset.trajectories]
    if cfg.pca_components is not None:
        if pca is None:
            rows = np.concatenate([t.states for t in trajectories], axis=0)
            if cfg.pca_components > rows.shape[1]:
                raise EmbeddingError(
                    f"PCA主成分个数{cfg.pca_components}超过嵌入维度{rows.shape[1]}")
            pca = pca_fit(rows, cfg.pca_components)
        trajectories = [replace(t, states=pca.transform(t.states)) for t in trajectories]

    meta = {**dataset.meta, "delays": L, "pca_components": cfg.pca_components,
            "window_order": "oldest_first"}
    if pca is not None:
        meta["pca"] = pca.to_dict()
    return TrajectoryDataset(trajectories, dataset.dt, dataset.seed, meta), pca


def _periodic_phase(stamps: pd.DatetimeIndex, granularity: str) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (τ, P)：hour为一天中的小时，day为一个月中的天，month为一年中的月份"""
    hours = stamps.hour + stamps.minute / 60.0 + stamps.second / 3600.0
    if granularity == "hour":
        return np.asarray(hours, dtype=float), np.full(len(stamps), 24.0)
    if granularity == "day":
        tau = (stamps.day - 1) + hours / 24.0
        return np.asarray(tau, dtype=float), np.asarray(stamps.days_in_month, dtype=float)
    if granularity == "month":
        tau = (stamps.month - 1) + ((stamps.day - 1) + hours / 24.0) / stamps.days_in_month
        return np.asarray(tau, dtype=float), np.full(len(stamps), 12.0)
    raise EmbeddingError(f"未知时间粒度: {granularity}，可选: {', '.join(GRANULARITIES)}")


def time_feature_names(granularities: Sequence[str]) -> List[str]:
    """时间特征列名：每个粒度依次为 sin 和 cos"""
    return [f"{g}_{f}" for g in granularities for f in ("sin", "cos")]


def time_features(timestamps, granularities: Sequence[str] = GRANULARITIES) -> np.ndarray:
    """
    日历时间的sin/cos特征

    对每个粒度g（周期P_g）生成两列 sin(2πτ/P_g), cos(2πτ/P_g)。

    Args:
        timestamps: 可解析的时间列表
        granularities: hour, day, month 的子集

    Returns:
        np.ndarray: n×(2·len(granularities)) 特征矩阵
    """
    try:
        stamps = pd.DatetimeIndex(pd.to_datetime(list(timestamps)))
    except (ValueError, TypeError) as e:
        raise EmbeddingError(f"无法解析时间: {e}") from e
    if stamps.hasnans:
        raise EmbeddingError("时间中存在缺失值")
    columns = []
    for g in granularities:
        tau, period = _periodic_phase(stamps, g)
        angle = 2.0 * np.pi * tau / period
        columns.extend([np.sin(angle), np.cos(angle)])
    if not columns:
        return np.zeros((len(stamps), 0))
    return np.column_stack(columns)
