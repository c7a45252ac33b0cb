"""
稠密数值内核

截断SVD最小二乘、伪逆、一般特征值分解和PCA。仓库中所有拟合都通过这里的
lstsq_svd完成，截断阈值的语义只在这一个地方定义。
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import DegenerateDataError, DimensionError, NonFiniteError, ConvergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LstsqOptions:
    """
    最小二乘选项

    rcond为相对截断阈值：小于 rcond * sigma_max 的奇异值视为零。
    rcond = 0 时只使用机器精度的默认阈值（精确伪逆）。
    """
    rcond: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.rcond) or self.rcond < 0:
            raise ValueError(f"rcond必须非负: {self.rcond}")


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name}必须是二维矩阵，实际维度为{arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name}包含非有限值")
    return arr


def _truncated_svd(A: np.ndarray, opts: LstsqOptions) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 U, 1/s（截断处为0）, Vt"""
    if A.size == 0:
        m, n = A.shape
        k = min(m, n)
        return np.zeros((m, k)), np.zeros(k), np.zeros((k, n))
    try:
        U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesdd")
    except scipy.linalg.LinAlgError:
        # gesdd偶尔不收敛，退回更稳健的gesvd
        U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    s_max = s[0] if s.size else 0.0
    if opts.rcond > 0:
        cutoff = opts.rcond * s_max
    else:
        cutoff = max(A.shape) * np.finfo(float).eps * s_max
    s_inv = np.zeros_like(s)
    keep = s > cutoff
    s_inv[keep] = 1.0 / s[keep]
    return U, s_inv, Vt


def lstsq_svd(A, B, opts: Optional[LstsqOptions] = None) -> np.ndarray:
    """
    截断SVD最小二乘求解 A X ≈ B

    Args:
        A: m×n 系数矩阵
        B: m×k 右端矩阵（也接受长度为m的向量）
        opts: 截断选项

    Returns:
        np.ndarray: n×k 解（B为向量时返回长度n的向量）
    """
    opts = opts or LstsqOptions()
    A = _as_matrix(A, "A")
    B_arr = np.asarray(B, dtype=float)
    vector_rhs = B_arr.ndim == 1
    B = _as_matrix(B_arr.reshape(-1, 1) if vector_rhs else B_arr, "B")
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"行数不一致: A有{A.shape[0]}行, B有{B.shape[0]}行")

    U, s_inv, Vt = _truncated_svd(A, opts)
    X = Vt.T @ (s_inv[:, None] * (U.T @ B))
    return X.ravel() if vector_rhs else X


def pinv(A, opts: Optional[LstsqOptions] = None) -> np.ndarray:
    """
    Moore–Penrose伪逆，小于阈值的奇异值置零

    Args:
        A: m×n 矩阵
        opts: 截断选项

    Returns:
        np.ndarray: n×m 伪逆
    """
    opts = opts or LstsqOptions()
    A = _as_matrix(A, "A")
    U, s_inv, Vt = _truncated_svd(A, opts)
    return (Vt.T * s_inv) @ U.T


def solve_right(Y, A, opts: Optional[LstsqOptions] = None) -> np.ndarray:
    """
    计算 Y A⁺，即 min ‖X A − Y‖ 的解

    EDMD中的 K = F(H') F(H)⁺ 和 C = H F(H)⁺ 都是这种形式，
    通过对转置问题调用lstsq_svd求解。

    Args:
        Y: p×N 矩阵
        A: q×N 矩阵

    Returns:
        np.ndarray: p×q 矩阵
    """
    Y = _as_matrix(Y, "Y")
    A = _as_matrix(A, "A")
    if Y.shape[1] != A.shape[1]:
        raise DimensionError(f"列数不一致: Y有{Y.shape[1]}列, A有{A.shape[1]}列")
    return lstsq_svd(A.T, Y.T, opts).T


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    """每个特征向量归一化，并使模最大的分量为正实数"""
    vectors = np.array(vectors, dtype=complex)
    for j in range(vectors.shape[1]):
        v = vectors[:, j]
        norm = np.linalg.norm(v)
        if norm == 0:
            continue
        v = v / norm
        idx = int(np.argmax(np.abs(v)))
        v = v * (np.conj(v[idx]) / abs(v[idx]))
        vectors[:, j] = v
    return vectors


def eig_general(A, left: bool = False) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    一般方阵的特征值（可选左特征向量）

    特征值按模降序排列，模相同时按实部、虚部降序，保证对固定输入结果确定。
    特征向量约定：单位范数，模最大的分量为正实数。

    Args:
        A: n×n 方阵
        left: 是否同时返回左特征向量（按列存放）

    Returns:
        特征值数组；left为True时返回 (特征值, 左特征向量)
    """
    A = _as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"特征值分解需要方阵，实际形状为{A.shape}")
    if A.shape[0] == 0:
        empty = np.zeros(0, dtype=complex)
        return (empty, np.zeros((0, 0), dtype=complex)) if left else empty
    try:
        if left:
            values, vl = scipy.linalg.eig(A, left=True, right=False)
        else:
            values = scipy.linalg.eigvals(A)
    except scipy.linalg.LinAlgError as e:
        raise ConvergenceError(f"特征值迭代未收敛: {e}") from e

    order = np.lexsort((-values.imag, -values.real, -np.abs(values)))
    values = values[order]
    if left:
        return values, _fix_phase(vl[:, order])
    return values


@dataclass(frozen=True)
class PCAModel:
    """
    PCA模型

    Attributes:
        mean: 长度d的均值向量
        components: k×d 正交行向量
        explained_variance: 长度k的非增方差
    """
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, points) -> np.ndarray:
        return pca_transform(self, points)

    def inverse_transform(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return coords @ self.components + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PCAModel":
        return cls(
            mean=np.asarray(data["mean"], dtype=float),
            components=np.asarray(data["components"], dtype=float),
            explained_variance=np.asarray(data["explained_variance"], dtype=float),
        )


def pca_fit(data, k: int, allow_degenerate: bool = True) -> PCAModel:
    """
    在N×d数据上拟合PCA

    主成分为中心化数据的前k个右奇异向量，符号约定：每个主成分中模最大的
    分量为正。

    Args:
        data: N×d 数据
        k: 主成分个数
        allow_degenerate: k超过数据秩时是否继续（SVD仍给出正交基），否则报错

    Returns:
        PCAModel: 拟合结果
    """
    data = _as_matrix(data, "data")
    n, d = data.shape
    if n < 2:
        raise DimensionError(f"PCA至少需要2个样本，实际为{n}")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"主成分个数k={k}超出范围[1, {min(n, d)}]")

    mean = data.mean(axis=0)
    centered = data - mean
    _, s, Vt = scipy.linalg.svd(centered, full_matrices=False)
    tol = max(n, d) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if k > rank:
        if not allow_degenerate:
            raise DegenerateDataError(f"数据秩为{rank}，小于主成分个数{k}")
        logger.warning("PCA: 数据秩%d小于主成分个数%d", rank, k)

    components = Vt[:k].copy()
    for row in components:
        if row[int(np.argmax(np.abs(row)))] < 0:
            row *= -1.0
    explained = s[:k] ** 2 / (n - 1)
    return PCAModel(mean=mean, components=components, explained_variance=explained)


def pca_transform(model: PCAModel, points) -> np.ndarray:
    """
    中心化并投影到主成分

    Args:
        model: PCA模型
        points: *×d 点（也接受单个向量）

    Returns:
        np.ndarray: *×k 坐标
    """
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != model.mean.shape[0]:
        raise DimensionError(f"点的维度{points.shape[-1]}与PCA维度{model.mean.shape[0]}不一致")
    return (points - model.mean) @ model.components.T
