"""
控制模块

在提升空间的线性模型 z' = K z + B u 上做LQR综合，
并以滚动时域的方式在真实系统上闭环运行（MPC）。
输入字典为非线性时，用线性映射 P（P G(x) ≈ x）把提升空间的输入投影回物理输入。
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from .dynamics import SystemSpec, default_substeps, integrate
from .errors import ControlError, ConvergenceError, DegenerateDataError, DimensionError
from .koopman_rnn import SampledRNN
from .numkit import LstsqOptions, solve_right
from .sampling import SampledLayer, apply_layer

logger = logging.getLogger(__name__)

DARE_METHODS = ("iteration", "scipy")


def _is_symmetric(M: np.ndarray, tol: float = 1e-10) -> bool:
    return M.shape[0] == M.shape[1] and np.allclose(M, M.T, atol=tol * max(1.0, np.abs(M).max()))


@dataclass(frozen=True)
class LQRWeights:
    """
    二次代价权重

    Attributes:
        Q: 状态代价（半正定）
        R: 输入代价（正定）
        q_space: state 表示Q定义在物理状态坐标上（拟合时提升为 Cᵀ Q C），lifted 表示直接定义在提升空间
    """
    Q: np.ndarray
    R: np.ndarray
    q_space: str = "state"

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.q_space not in ("state", "lifted"):
            raise ValueError(f"未知q_space: {self.q_space}")
        if not _is_symmetric(Q) or np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ValueError("Q必须是对称半正定矩阵")
        if not _is_symmetric(R) or np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R必须是对称正定矩阵")

    @classmethod
    def diagonal(cls, q: Sequence[float], r: Sequence[float], q_space: str = "state") -> "LQRWeights":
        """由对角元构造权重，例如 Q=diag(10, 10), R=diag(1)"""
        return cls(Q=np.diag(np.asarray(q, dtype=float)), R=np.diag(np.asarray(r, dtype=float)),
                   q_space=q_space)


def riccati_residual(A, Bc, Q, R, P) -> float:
    """离散代数Riccati方程残差的Frobenius范数"""
    BtPA = Bc.T @ P @ A
    S = R + Bc.T @ P @ Bc
    rhs = Q + A.T @ P @ A - BtPA.T @ scipy.linalg.solve(S, BtPA, assume_a="sym")
    return float(np.linalg.norm(rhs - P))


def dare_solve(A, Bc, Q, R, tol: float = 1e-10, max_iter: int = 10000,
               method: str = "iteration") -> np.ndarray:
    """
    求解离散代数Riccati方程

        P = Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA

    默认从 P₀ = Q 出发做Riccati映射的不动点迭代，直到相邻两次迭代之差
    （逐元素最大绝对值）不超过 tol·max(1, max|P|)，返回前再检查方程残差；method为scipy时调用 scipy.linalg.solve_discrete_are。

    Args:
        A: n×n 系统矩阵
        Bc: n×m 输入矩阵
        Q: n×n 状态代价
        R: m×m 输入代价
        tol: 相对收敛容差
        max_iter: 最大迭代次数
        method: iteration 或 scipy

    Returns:
        np.ndarray: 对称的解P

    Raises:
        ConvergenceError: 迭代不收敛（通常说明系统不可镇定）
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Bc = np.asarray(Bc, dtype=float)
    if Bc.ndim == 1:
        Bc = Bc[:, None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = Bc.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise DimensionError(f"Riccati方程维度不一致: A{A.shape}, B{Bc.shape}, Q{Q.shape}, R{R.shape}")
    if method not in DARE_METHODS:
        raise ValueError(f"未知DARE求解方法: {method}")

    if method == "scipy":
        try:
            P = scipy.linalg.solve_discrete_are(A, Bc, Q, R)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise ConvergenceError(f"DARE求解失败: {e}") from e
        return 0.5 * (P + P.T)

    P = Q.copy()
    for iteration in range(1, max_iter + 1):
        BtPA = Bc.T @ P @ A
        S = R + Bc.T @ P @ Bc
        try:
            P_next = Q + A.T @ P @ A - BtPA.T @ scipy.linalg.solve(S, BtPA, assume_a="sym")
        except np.linalg.LinAlgError as e:
            raise ConvergenceError(f"Riccati迭代第{iteration}步出现奇异矩阵") from e
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise ConvergenceError(f"Riccati迭代第{iteration}步发散")
        # 逐元素范数，Frobenius范数在P很大时会溢出
        delta = np.abs(P_next - P).max()
        P = P_next
        scale = max(1.0, np.abs(P).max())
        if not (np.isfinite(delta) and np.isfinite(scale)):
            raise ConvergenceError(f"Riccati迭代第{iteration}步发散")
        if delta <= tol * scale:
            residual = riccati_residual(A, Bc, Q, R, P)
            if not residual <= 100.0 * n * tol * scale:
                raise ConvergenceError(f"Riccati迭代停止但方程残差{residual:.3e}过大，系统可能不可镇定")
            logger.info("DARE迭代收敛: %d步, 残差%.3e", iteration, residual)
            return P
    raise ConvergenceError(f"Riccati迭代{max_iter}步内未收敛，系统可能不可镇定")


def lqr_gain(A, Bc, R, P) -> np.ndarray:
    """反馈增益 L = (R + BᵀPB)⁻¹ BᵀPA，控制律 u = −L z"""
    Bc = np.asarray(Bc, dtype=float)
    if Bc.ndim == 1:
        Bc = Bc[:, None]
    S = np.atleast_2d(R) + Bc.T @ P @ Bc
    return scipy.linalg.solve(S, Bc.T @ P @ np.asarray(A, dtype=float), assume_a="sym")


def fit_lift_projection(input_dict: SampledLayer, X_samples, rcond: float = 0.0) -> np.ndarray:
    """
    拟合线性映射 P，使 P G(x) ≈ x：P = X G(X)⁺

    Args:
        input_dict: 输入字典G
        X_samples: d_x×N 输入样本（列为样本）
        rcond: 伪逆截断

    Returns:
        np.ndarray: d_x×M̂ 投影矩阵
    """
    X = np.atleast_2d(np.asarray(X_samples, dtype=float))
    if X.shape[0] != input_dict.input_dim:
        raise DimensionError(f"输入样本维度{X.shape[0]}与输入字典维度{input_dict.input_dim}不一致")
    if np.all(np.ptp(X, axis=1) == 0):
        raise DegenerateDataError("输入样本全部相同，无法拟合投影")
    G = apply_layer(input_dict, X.T).T
    return solve_right(X, G, LstsqOptions(rcond=rcond))


@dataclass(frozen=True)
class LQRController:
    """
    提升空间上的LQR控制器

    控制律：v = −gain (F(h) − target_lifted)；有投影P时物理输入 u = P v，否则 u = v。
    """
    gain: np.ndarray
    riccati_P: np.ndarray
    target_lifted: np.ndarray
    target_state: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    q_space: str = "state"
    lift_projection: Optional[np.ndarray] = None
    input_bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def input_dim(self) -> int:
        return self.R.shape[0]

    def closed_loop_matrix(self, model: SampledRNN) -> np.ndarray:
        """提升空间闭环矩阵 K − B·gain"""
        return model.K - model.B @ self.gain

    def control(self, model: SampledRNN, h) -> np.ndarray:
        """
        根据当前测量状态计算输入

        Raises:
            ControlError: 输入出现非有限值
        """
        z = model.lift(np.asarray(h, dtype=float))
        u = -self.gain @ (z - self.target_lifted)
        if self.lift_projection is not None:
            u = self.lift_projection @ u
        if self.input_bounds is not None:
            u = np.clip(u, self.input_bounds[0], self.input_bounds[1])
        if not np.all(np.isfinite(u)):
            raise ControlError(f"控制输入出现非有限值: {u}")
        return u

    def stage_cost(self, model: SampledRNN, h, u) -> Tuple[float, float]:
        """单步代价，返回 (状态部分, 输入部分)"""
        if self.q_space == "state":
            e = np.asarray(h, dtype=float) - self.target_state
        else:
            e = model.lift(h) - self.target_lifted
        u = np.asarray(u, dtype=float)
        return float(e @ self.Q @ e), float(u @ self.R @ u)


def lqr_fit(model: SampledRNN, weights: LQRWeights, target_state,
            X_samples=None, input_bounds: Optional[Sequence[Sequence[float]]] = None,
            tol: float = 1e-10, max_iter: int = 10000, method: str = "iteration") -> LQRController:
    """
    由代理模型拟合LQR控制器

    Q定义在状态坐标时提升为 Cᵀ Q C。输入字典非线性时需要X_samples拟合投影P，
    提升空间的输入代价取 PᵀRP + λ_min(R)·I，使其正定。

    Args:
        model: 有输入的Koopman模型
        weights: 代价权重
        target_state: 目标状态h*
        X_samples: d_x×N 输入样本（非线性输入字典时必需）
        input_bounds: 每个输入分量的 [下界, 上界]，可选
        tol: DARE容差
        max_iter: DARE最大迭代次数
        method: DARE求解方法

    Returns:
        LQRController: 控制器
    """
    if not model.is_controlled:
        raise ControlError("模型没有输入，无法设计控制器")
    if model.mode != "koopman":
        raise ControlError("直接回归模型没有提升空间线性结构，无法设计LQR")
    target_state = np.asarray(target_state, dtype=float)
    if target_state.shape != (model.state_dim,):
        raise DimensionError(f"目标状态形状{target_state.shape}应为({model.state_dim},)")

    if weights.q_space == "state":
        if weights.Q.shape != (model.state_dim, model.state_dim):
            raise DimensionError(f"状态代价Q应为{model.state_dim}×{model.state_dim}")
        Q_lifted = model.C.T @ weights.Q @ model.C
        Q_lifted = 0.5 * (Q_lifted + Q_lifted.T)
    else:
        if weights.Q.shape != (model.lifted_dim, model.lifted_dim):
            raise DimensionError(f"提升空间代价Q应为{model.lifted_dim}×{model.lifted_dim}")
        Q_lifted = weights.Q
    if weights.R.shape != (model.input_dim, model.input_dim):
        raise DimensionError(f"输入代价R应为{model.input_dim}×{model.input_dim}")

    projection = None
    R_lifted = weights.R
    if not model.input_dict.is_identity:
        if X_samples is None:
            raise ControlError("非线性输入字典需要输入样本来拟合投影P")
        projection = fit_lift_projection(model.input_dict, X_samples)
        R_lifted = projection.T @ weights.R @ projection
        R_lifted = 0.5 * (R_lifted + R_lifted.T) + np.linalg.eigvalsh(weights.R).min() * np.eye(
            projection.shape[1])

    try:
        P = dare_solve(model.K, model.B, Q_lifted, R_lifted, tol=tol, max_iter=max_iter, method=method)
    except ConvergenceError as e:
        raise ControlError(f"LQR设计失败: {e}") from e
    gain = lqr_gain(model.K, model.B, R_lifted, P)

    bounds = None
    if input_bounds is not None:
        box = np.asarray(input_bounds, dtype=float)
        bounds = (box[:, 0], box[:, 1])

    controller = LQRController(
        gain=gain, riccati_P=P, target_lifted=model.lift(target_state), target_state=target_state,
        Q=weights.Q, R=weights.R, q_space=weights.q_space, lift_projection=projection,
        input_bounds=bounds,
    )
    radius = float(np.abs(np.linalg.eigvals(controller.closed_loop_matrix(model))).max())
    logger.info("LQR拟合完成: 提升维度=%d, 闭环谱半径=%.6f", model.lifted_dim, radius)
    return controller


@dataclass
class ControlTrace:
    """
    闭环轨迹

    states有T+1行（含初值），inputs和各项代价有T行。
    """
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    state_costs: np.ndarray
    input_costs: np.ndarray
    target_state: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def stage_costs(self) -> np.ndarray:
        return self.state_costs + self.input_costs

    @property
    def cumulative_cost(self) -> float:
        return float(np.sum(self.stage_costs))

    @property
    def error_norms(self) -> np.ndarray:
        """每个时刻到目标状态的距离"""
        return np.linalg.norm(self.states - self.target_state, axis=1)

    @property
    def final_error_ratio(self) -> float:
        norms = self.error_norms
        if norms[0] == 0:
            return 0.0 if norms[-1] == 0 else float("inf")
        return float(norms[-1] / norms[0])

    def to_frame(self) -> pd.DataFrame:
        """t, h1..hd, u1..um, stage_cost, error_norm；最后一行没有输入和代价"""
        n = len(self.times)
        columns: Dict[str, Any] = {"t": self.times}
        for k in range(self.states.shape[1]):
            columns[f"h{k + 1}"] = self.states[:, k]
        padded = np.full((n, self.inputs.shape[1]), np.nan)
        padded[:-1] = self.inputs
        for k in range(padded.shape[1]):
            columns[f"u{k + 1}"] = padded[:, k]
        cost = np.full(n, np.nan)
        cost[:-1] = self.stage_costs
        columns["stage_cost"] = cost
        columns["error_norm"] = self.error_norms
        return pd.DataFrame(columns)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def summary(self) -> Dict[str, Any]:
        """累计代价及收敛诊断"""
        norms = self.error_norms
        return {
            "cumulative_cost": self.cumulative_cost,
            "state_cost": float(np.sum(self.state_costs)),
            "input_cost": float(np.sum(self.input_costs)),
            "initial_error": float(norms[0]),
            "final_error": float(norms[-1]),
            "final_error_ratio": self.final_error_ratio,
            "steps": int(self.inputs.shape[0]),
            **self.meta,
        }


def mpc_run(plant: SystemSpec, model: SampledRNN, controller: LQRController, h0, T: int,
            dt: float, substeps: Optional[int] = None) -> ControlTrace:
    """
    滚动时域闭环运行

    每一步：提升当前真实状态，计算 u，在真实系统上以恒定u积分一个dt，
    记录 (h−h*)ᵀQ(h−h*) + uᵀRu。

    Args:
        plant: 真实系统
        model: 代理模型
        controller: LQR控制器
        h0: 初值
        T: 步数
        dt: 步长
        substeps: 每步的RK4子步数

    Returns:
        ControlTrace: 闭环轨迹
    """
    if plant.state_dim != model.state_dim or plant.input_dim != model.input_dim:
        raise DimensionError(
            f"真实系统维度({plant.state_dim}, {plant.input_dim})与模型维度"
            f"({model.state_dim}, {model.input_dim})不一致")
    if T < 0:
        raise ValueError(f"步数不能为负: {T}")
    substeps = substeps or default_substeps(dt)
    h = np.asarray(h0, dtype=float).copy()
    states = np.empty((T + 1, plant.state_dim))
    inputs = np.empty((T, plant.input_dim))
    state_costs = np.empty(T)
    input_costs = np.empty(T)
    states[0] = h
    for t in range(T):
        u = controller.control(model, h)
        state_costs[t], input_costs[t] = controller.stage_cost(model, h, u)
        h = integrate(plant, h, dt, dt, inputs=u[None], substeps=substeps).states[-1]
        inputs[t] = u
        states[t + 1] = h
    trace = ControlTrace(
        times=np.arange(T + 1) * dt, states=states, inputs=inputs,
        state_costs=state_costs, input_costs=input_costs, target_state=controller.target_state,
    )
    logger.info("MPC完成: %d步, 累计代价%.4f, 误差比%.4f", T, trace.cumulative_cost,
                trace.final_error_ratio)
    return trace
