"""
评价指标

非混沌系统用均方误差；混沌系统用基于高斯混合的经验KL散度（EKL）
衡量预测吸引子与真实吸引子的几何差异。
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import DimensionError

logger = logging.getLogger(__name__)

# 单次距离矩阵的元素个数上限
_CHUNK_ELEMENTS = 1 << 22


def mse(pred, truth) -> float:
    """
    均方误差：所有 T·d 个平方误差的平均

    Args:
        pred: T×d 预测
        truth: T×d 真值

    Returns:
        float: 均方误差
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DimensionError(f"预测形状{pred.shape}与真值形状{truth.shape}不一致")
    if pred.size == 0:
        raise ValueError("不能对空数组计算均方误差")
    return float(np.mean((pred - truth) ** 2))


@dataclass(frozen=True)
class EKLConfig:
    """EKL配置：各向同性方差σ²、蒙特卡洛样本数、随机种子"""
    sigma2: float = 1.0
    n_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2必须为正: {self.sigma2}")
        if self.n_samples < 1:
            raise ValueError(f"样本数必须至少为1: {self.n_samples}")


def gmm_log_density(points, centres, sigma2: float) -> np.ndarray:
    """
    等权重各向同性高斯混合的对数密度

    按样本和中心分块计算平方距离，用log-sum-exp累加，避免密度下溢。

    Args:
        points: n×d 求值点
        centres: T×d 混合中心
        sigma2: 方差

    Returns:
        np.ndarray: 长度n的对数密度
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    if points.shape[1] != centres.shape[1]:
        raise DimensionError(f"求值点维度{points.shape[1]}与中心维度{centres.shape[1]}不一致")
    n, d = points.shape
    T = centres.shape[0]
    centre_chunk = max(1, min(T, _CHUNK_ELEMENTS // max(1, min(n, 1024))))
    point_chunk = max(1, _CHUNK_ELEMENTS // centre_chunk)

    out = np.empty(n)
    for p0 in range(0, n, point_chunk):
        block = points[p0:p0 + point_chunk]
        acc = np.full(block.shape[0], -np.inf)
        for c0 in range(0, T, centre_chunk):
            sq = cdist(block, centres[c0:c0 + centre_chunk], "sqeuclidean")
            acc = np.logaddexp(acc, logsumexp(-0.5 * sq / sigma2, axis=1))
        out[p0:p0 + point_chunk] = acc
    return out - np.log(T) - 0.5 * d * np.log(2.0 * np.pi * sigma2)


def _log_ratios(truth, pred, cfg: EKLConfig) -> np.ndarray:
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    if truth.shape[0] < 1 or pred.shape[0] < 1:
        raise ValueError("真值和预测都至少需要一个快照")
    if truth.shape[1] != pred.shape[1]:
        raise DimensionError(f"真值维度{truth.shape[1]}与预测维度{pred.shape[1]}不一致")
    if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(pred))):
        raise ValueError("EKL输入含有非有限值")
    # 先均匀选择混合分量，再加 σ·标准正态噪声
    rng = np.random.default_rng(cfg.seed)
    idx = rng.integers(truth.shape[0], size=cfg.n_samples)
    noise = rng.standard_normal((cfg.n_samples, truth.shape[1]))
    samples = truth[idx] + np.sqrt(cfg.sigma2) * noise
    log_p = gmm_log_density(samples, truth, cfg.sigma2)
    log_q = gmm_log_density(samples, pred, cfg.sigma2)
    return log_p - log_q


def ekl(truth, pred, cfg: EKLConfig = EKLConfig()) -> float:
    """
    经验KL散度 D(p̂ ‖ q̂)

    p̂、q̂分别是以真值快照、预测快照为中心、协方差σ²I的等权重高斯混合，
    用从p̂抽取的n个样本做蒙特卡洛估计。

    Args:
        truth: T×d 真值快照
        pred: T'×d 预测快照
        cfg: EKL配置

    Returns:
        float: EKL估计值
    """
    return float(np.mean(_log_ratios(truth, pred, cfg)))


def ekl_with_error(truth, pred, cfg: EKLConfig = EKLConfig()) -> Tuple[float, float]:
    """EKL估计值及其蒙特卡洛标准误差"""
    ratios = _log_ratios(truth, pred, cfg)
    stderr = float(np.std(ratios, ddof=1) / np.sqrt(ratios.size)) if ratios.size > 1 else 0.0
    return float(np.mean(ratios)), stderr
