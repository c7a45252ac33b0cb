"""
采样RNN核心模块

组装采样得到的字典 F_M、G_M̂，用EDMD最小二乘求出外层矩阵 K、B、C、V：

    K = F(H') F(H)⁺                  （无输入）
    [K, B] = F(H') [F(H); G(X)]⁺      （有输入）
    C = H F(H)⁺,  V = Y H⁺ 或 Y F(H)⁺

预测时每一步先投影回状态空间再重新提升：z' = K F(h) + B G(x)，h' = C z'。
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .dynamics import RangeScaler
from .errors import DegenerateDataError, DimensionError, ModelFormatError
from .numkit import LstsqOptions, PCAModel, eig_general, solve_right
from .sampling import (
    SampledLayer, SamplingConfig, apply_layer, gaussian_layer, identity_layer,
    layer_streams, sample_layer,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT = "sampledrnn-model"
SCHEMA_VERSION = 1

V_MODES = ("from_states", "from_lifted")
SAMPLING_METHODS = ("swim", "gaussian")


@dataclass(frozen=True)
class FitOptions:
    """
    拟合选项

    Attributes:
        rcond: 所有伪逆共用的相对奇异值截断
        bias_in_regression: 是否在特征中追加常数1
        v_mode: from_states 使用 y = V h，from_lifted 使用 y = V z
    """
    rcond: float = 0.0
    bias_in_regression: bool = False
    v_mode: str = "from_states"

    def __post_init__(self):
        if not self.rcond >= 0:
            raise ValueError(f"rcond必须非负: {self.rcond}")
        if self.v_mode not in V_MODES:
            raise ValueError(f"未知v_mode: {self.v_mode}")

    @property
    def lstsq(self) -> LstsqOptions:
        return LstsqOptions(rcond=self.rcond)


def _freeze(arr: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if arr is None:
        return None
    arr = np.array(arr, dtype=float, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampledRNN:
    """
    拟合好的采样RNN，拟合后不可修改

    mode为koopman时 K 为方阵，h' = C (K F(h) + B G(x))；
    mode为direct时没有K，h' = C F(h) + B G(x)（不做Koopman分解的直接回归）。
    """
    state_dict: SampledLayer
    C: np.ndarray
    K: Optional[np.ndarray] = None
    input_dict: Optional[SampledLayer] = None
    B: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    scaler: Optional[RangeScaler] = None
    pca: Optional[PCAModel] = None
    bias_in_regression: bool = False
    v_mode: str = "from_states"
    mode: str = "koopman"
    fit_meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("C", "K", "B", "V"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        M = self.lifted_dim
        if self.mode not in ("koopman", "direct"):
            raise ValueError(f"未知模型模式: {self.mode}")
        if self.mode == "koopman":
            if self.K is None or self.K.shape != (M, M):
                raise DimensionError(f"K应为{M}×{M}方阵")
            if self.C.shape[1] != M:
                raise DimensionError(f"C应有{M}列，实际为{self.C.shape[1]}")
        elif self.C.shape[1] != M:
            raise DimensionError(f"C应有{M}列，实际为{self.C.shape[1]}")
        if (self.B is None) != (self.input_dict is None):
            raise DimensionError("B与输入字典必须同时存在")
        if self.B is not None:
            rows = M if self.mode == "koopman" else self.state_dim
            if self.B.shape != (rows, self.input_dict.width):
                raise DimensionError(f"B形状{self.B.shape}应为({rows}, {self.input_dict.width})")

    @property
    def state_dim(self) -> int:
        return self.C.shape[0]

    @property
    def lifted_dim(self) -> int:
        return self.state_dict.width + (1 if self.bias_in_regression else 0)

    @property
    def input_dim(self) -> int:
        return 0 if self.input_dict is None else self.input_dict.input_dim

    @property
    def is_controlled(self) -> bool:
        return self.B is not None

    def lift(self, h) -> np.ndarray:
        """提升到字典空间 F_M(h)（需要时追加常数1）"""
        features = apply_layer(self.state_dict, h)
        if self.bias_in_regression:
            ones = np.ones(features.shape[:-1] + (1,))
            features = np.concatenate([features, ones], axis=-1)
        return features

    def lift_inputs(self, x) -> np.ndarray:
        """输入字典 G_M̂(x)"""
        return apply_layer(self.input_dict, x)


def _data_hash(*arrays) -> str:
    digest = hashlib.sha256()
    for arr in arrays:
        if arr is not None:
            digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return digest.hexdigest()


def _check_snapshots(H, H_next) -> Tuple[np.ndarray, np.ndarray]:
    H = np.asarray(H, dtype=float)
    H_next = np.asarray(H_next, dtype=float)
    if H.ndim != 2 or H.shape != H_next.shape:
        raise DimensionError(f"H与H'形状不一致: {H.shape} vs {H_next.shape}")
    if H.shape[1] < 1:
        raise DimensionError("至少需要一个快照对")
    return H, H_next


def _features(layer: SampledLayer, rows: np.ndarray, bias: bool) -> np.ndarray:
    """字典在样本上的取值，按字典行、样本列排列（M×N）"""
    F = apply_layer(layer, rows).T
    if bias:
        F = np.vstack([F, np.ones((1, F.shape[1]))])
    return F


def build_layer(data_rows: np.ndarray, target_rows: Optional[np.ndarray], cfg: SamplingConfig,
                rng: np.random.Generator, sampling: str = "swim") -> SampledLayer:
    """
    按采样方式构造隐藏层

    Args:
        data_rows: N×d 采样数据
        target_rows: N×k 目标（gradient_weighted使用）
        cfg: 采样配置
        rng: 随机数生成器
        sampling: swim 或 gaussian

    Returns:
        SampledLayer: 隐藏层
    """
    if sampling == "swim":
        return sample_layer(data_rows, target_rows, cfg, rng)
    if sampling == "gaussian":
        return gaussian_layer(data_rows.shape[1], cfg.width, rng, activation=cfg.activation)
    raise ValueError(f"未知采样方式: {sampling}，可选: {', '.join(SAMPLING_METHODS)}")


def edmd_matrices(F, F_next, H, opts: Optional[FitOptions] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    给定字典取值的EDMD：K = F' F⁺，C = H F⁺

    Args:
        F: M×N 字典在H上的取值
        F_next: M×N 字典在H'上的取值
        H: d×N 状态

    Returns:
        Tuple[np.ndarray, np.ndarray]: (K, C)
    """
    opts = opts or FitOptions()
    K = solve_right(F_next, F, opts.lstsq)
    C = solve_right(H, F, opts.lstsq)
    return K, C


def _fit_V(Y, H, F, opts: FitOptions) -> Optional[np.ndarray]:
    if Y is None:
        return None
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != H.shape[1]:
        raise DimensionError(f"Y形状{Y.shape}与快照数{H.shape[1]}不一致")
    # y_t 与 h_t 同一时刻对齐
    if opts.v_mode == "from_states":
        return solve_right(Y, H, opts.lstsq)
    return solve_right(Y, F, opts.lstsq)


def _state_layer(H, H_next, cfg, rng, sampling, state_layer) -> SampledLayer:
    if state_layer is not None:
        return state_layer
    if cfg is None:
        raise ValueError("需要提供state_layer或采样配置")
    if np.all(np.ptp(H, axis=1) == 0):
        raise DegenerateDataError("所有快照相同，无法构造字典")
    return build_layer(H.T, H_next.T, cfg, rng, sampling)


def _meta(opts, seed, sampling, state_layer, input_layer, cfg, *arrays) -> Dict[str, Any]:
    return {
        "rcond": float(opts.rcond),
        "seed": None if seed is None else int(seed),
        "sampling": sampling,
        "state_width": int(state_layer.width),
        "input_width": None if input_layer is None else int(input_layer.width),
        "activation": state_layer.activation,
        "density": None if cfg is None else cfg.density,
        "n_samples": int(arrays[0].shape[1]),
        "data_hash": _data_hash(*arrays),
    }


def fit_uncontrolled(H, H_next, Y=None, layer_cfg: Optional[SamplingConfig] = None,
                     opts: Optional[FitOptions] = None, seed: int = 0,
                     state_layer: Optional[SampledLayer] = None,
                     sampling: str = "swim") -> SampledRNN:
    """
    无输入系统的拟合

    F_M从H的列中采样（gradient_weighted以H'为目标），然后
    K = F(H') F(H)⁺，C = H F(H)⁺，给定Y时 V = Y H⁺。

    Args:
        H: d_h×N 状态
        H_next: d_h×N 下一时刻状态
        Y: d_y×N 输出，可选
        layer_cfg: 状态层采样配置
        opts: 拟合选项
        seed: 根种子，状态层使用派生的第一个流
        state_layer: 直接指定的状态字典（跳过采样）
        sampling: swim 或 gaussian

    Returns:
        SampledRNN: 拟合好的模型
    """
    opts = opts or FitOptions()
    H, H_next = _check_snapshots(H, H_next)
    state_rng, _ = layer_streams(seed)
    start = time.perf_counter()
    layer = _state_layer(H, H_next, layer_cfg, state_rng, sampling, state_layer)
    if layer.input_dim != H.shape[0]:
        raise DimensionError(f"状态字典输入维度{layer.input_dim}与状态维度{H.shape[0]}不一致")

    F = _features(layer, H.T, opts.bias_in_regression)
    F_next = _features(layer, H_next.T, opts.bias_in_regression)
    K, C = edmd_matrices(F, F_next, H, opts)
    V = _fit_V(Y, H, F, opts)
    logger.info("无输入拟合完成: M=%d, N=%d, 用时%.3fs", layer.width, H.shape[1],
                time.perf_counter() - start)
    return SampledRNN(
        state_dict=layer, C=C, K=K, V=V,
        bias_in_regression=opts.bias_in_regression, v_mode=opts.v_mode,
        fit_meta=_meta(opts, seed, sampling, layer, None, layer_cfg, H, H_next),
    )


def _input_layer(X, H_next, cfg, rng, sampling, input_layer) -> SampledLayer:
    if input_layer is not None:
        return input_layer
    if cfg is None:
        return identity_layer(X.shape[0])
    return build_layer(X.T, H_next.T, cfg, rng, sampling)


def fit_controlled(H, H_next, X, Y=None, state_cfg: Optional[SamplingConfig] = None,
                   input_cfg: Optional[SamplingConfig] = None,
                   opts: Optional[FitOptions] = None, seed: int = 0,
                   state_layer: Optional[SampledLayer] = None,
                   input_layer: Optional[SampledLayer] = None,
                   sampling: str = "swim") -> SampledRNN:
    """
    有输入系统的拟合

    [K, B] = F(H') [F(H); G(X)]⁺，C = H F(H)⁺。
    input_cfg为None时输入字典G为恒等映射。输入维度为0时退化为fit_uncontrolled。

    Args:
        H: d_h×N 状态
        H_next: d_h×N 下一时刻状态
        X: d_x×N 输入
        Y: d_y×N 输出，可选
        state_cfg: 状态层采样配置
        input_cfg: 输入层采样配置，None表示恒等字典
        opts: 拟合选项
        seed: 根种子，状态层用第一个派生流，输入层用第二个
        state_layer: 直接指定的状态字典
        input_layer: 直接指定的输入字典
        sampling: swim 或 gaussian

    Returns:
        SampledRNN: 拟合好的模型
    """
    opts = opts or FitOptions()
    H, H_next = _check_snapshots(H, H_next)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != H.shape[1]:
        raise DimensionError(f"X形状{X.shape}与快照数{H.shape[1]}不一致")
    if X.shape[0] == 0:
        return fit_uncontrolled(H, H_next, Y, state_cfg, opts, seed, state_layer, sampling)

    state_rng, input_rng = layer_streams(seed)
    start = time.perf_counter()
    layer = _state_layer(H, H_next, state_cfg, state_rng, sampling, state_layer)
    g_layer = _input_layer(X, H_next, input_cfg, input_rng, sampling, input_layer)

    F = _features(layer, H.T, opts.bias_in_regression)
    F_next = _features(layer, H_next.T, opts.bias_in_regression)
    G = apply_layer(g_layer, X.T).T
    stacked = np.vstack([F, G])
    if not np.any(stacked):
        raise DegenerateDataError("堆叠特征矩阵的秩为0")
    KB = solve_right(F_next, stacked, opts.lstsq)
    M = F.shape[0]
    K, B = KB[:, :M], KB[:, M:]
    C = solve_right(H, F, opts.lstsq)
    V = _fit_V(Y, H, F, opts)
    logger.info("有输入拟合完成: M=%d, M̂=%d, N=%d, 用时%.3fs", layer.width, g_layer.width,
                H.shape[1], time.perf_counter() - start)
    return SampledRNN(
        state_dict=layer, C=C, K=K, input_dict=g_layer, B=B, V=V,
        bias_in_regression=opts.bias_in_regression, v_mode=opts.v_mode,
        fit_meta=_meta(opts, seed, sampling, layer, g_layer, state_cfg, H, H_next, X),
    )


def fit_direct(H, H_next, X=None, Y=None, state_cfg: Optional[SamplingConfig] = None,
               input_cfg: Optional[SamplingConfig] = None,
               opts: Optional[FitOptions] = None, seed: int = 0,
               state_layer: Optional[SampledLayer] = None,
               input_layer: Optional[SampledLayer] = None,
               sampling: str = "swim") -> SampledRNN:
    """
    不做Koopman分解的直接回归：[C_h, C_x] = H' [F(H); G(X)]⁺

    用于对比实验，隐藏层采样方式与fit_controlled相同。

    Returns:
        SampledRNN: mode为direct的模型
    """
    opts = opts or FitOptions()
    H, H_next = _check_snapshots(H, H_next)
    state_rng, input_rng = layer_streams(seed)
    layer = _state_layer(H, H_next, state_cfg, state_rng, sampling, state_layer)
    F = _features(layer, H.T, opts.bias_in_regression)

    g_layer = None
    blocks = [F]
    if X is not None and np.asarray(X).shape[0] > 0:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != H.shape[1]:
            raise DimensionError(f"X形状{X.shape}与快照数{H.shape[1]}不一致")
        g_layer = _input_layer(X, H_next, input_cfg, input_rng, sampling, input_layer)
        blocks.append(apply_layer(g_layer, X.T).T)
    else:
        X = None
    coef = solve_right(H_next, np.vstack(blocks), opts.lstsq)
    M = F.shape[0]
    C, B = coef[:, :M], (coef[:, M:] if g_layer is not None else None)
    V = _fit_V(Y, H, F, opts)
    return SampledRNN(
        state_dict=layer, C=C, input_dict=g_layer, B=B, V=V,
        bias_in_regression=opts.bias_in_regression, v_mode=opts.v_mode, mode="direct",
        fit_meta=_meta(opts, seed, sampling, layer, g_layer, state_cfg, H, H_next, X),
    )


def _step_rows(model: SampledRNN, h: np.ndarray, x: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """批量一步：h为n×d_h，返回 (h', z')"""
    if x is not None and not model.is_controlled:
        raise DimensionError("无输入模型不接受控制输入")
    if model.is_controlled and x is None:
        x = np.zeros(h.shape[:-1] + (model.input_dim,))
    z = model.lift(h)
    if model.mode == "koopman":
        z_next = z @ model.K.T
        if model.is_controlled:
            z_next = z_next + model.lift_inputs(x) @ model.B.T
        h_next = z_next @ model.C.T
    else:
        h_next = z @ model.C.T
        if model.is_controlled:
            h_next = h_next + model.lift_inputs(x) @ model.B.T
        z_next = model.lift(h_next)
    return h_next, z_next


def step(model: SampledRNN, h, x=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    单步预测

    Args:
        model: 模型
        h: 长度d_h的状态
        x: 输入（仅限有输入模型；省略时视为零输入）

    Returns:
        Tuple[np.ndarray, np.ndarray]: (h', z')
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (model.state_dim,):
        raise DimensionError(f"状态形状{h.shape}应为({model.state_dim},)")
    x_row = None if x is None else np.asarray(x, dtype=float).reshape(1, -1)
    h_next, z_next = _step_rows(model, h[None], x_row)
    return h_next[0], z_next[0]


@dataclass
class Prediction:
    """
    闭环预测结果

    states为 h_1..h_T（批量时为 n×T×d，发散后的位置为NaN）。
    valid_steps记录每条轨迹有限值的步数，horizon为请求的预测步数。
    """
    states: np.ndarray
    outputs: Optional[np.ndarray]
    valid_steps: np.ndarray
    horizon: int
    message: str = ""

    @property
    def truncated(self) -> bool:
        return bool(np.any(self.valid_steps < self.horizon))


def predict_batch(model: SampledRNN, h0, T: int, inputs=None) -> Prediction:
    """
    对一批初值做闭环预测，每一步都使用上一步的预测

    Args:
        model: 模型
        h0: n×d_h 初值
        T: 预测步数
        inputs: n×T×d_x 输入序列（有输入模型）

    Returns:
        Prediction: states为 n×T×d_h
    """
    if T < 0:
        raise ValueError(f"预测步数不能为负: {T}")
    h = np.atleast_2d(np.asarray(h0, dtype=float))
    if h.shape[1] != model.state_dim:
        raise DimensionError(f"初值维度{h.shape[1]}与模型状态维度{model.state_dim}不一致")
    n = h.shape[0]
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 2:
            inputs = inputs[None]
        if inputs.shape[:2] != (n, T):
            raise DimensionError(f"输入形状{inputs.shape}应为({n}, {T}, d_x)")

    states = np.full((n, T, model.state_dim), np.nan)
    y_dim = 0 if model.V is None else model.V.shape[0]
    outputs = np.full((n, T, y_dim), np.nan) if model.V is not None else None
    valid = np.full(n, T, dtype=int)
    alive = np.ones(n, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            x = None if inputs is None else inputs[:, t]
            if x is None and model.is_controlled:
                x = np.zeros((n, model.input_dim))
            h_next, z_next = _step_rows(model, h, x)
            finite = np.all(np.isfinite(h_next), axis=1)
            newly_dead = alive & ~finite
            valid[newly_dead] = t
            alive &= finite
            if not np.any(alive):
                break
            states[alive, t] = h_next[alive]
            if outputs is not None:
                source = h_next if model.v_mode == "from_states" else z_next
                outputs[alive, t] = source[alive] @ model.V.T
            h = np.where(alive[:, None], h_next, 0.0)

    message = ""
    if np.any(valid < T):
        message = f"预测发散: 轨迹{np.flatnonzero(valid < T).tolist()}在第{valid[valid < T].tolist()}步出现非有限值"
        logger.warning(message)
    return Prediction(states=states, outputs=outputs, valid_steps=valid, horizon=T, message=message)


def predict(model: SampledRNN, h0, T: int, inputs=None) -> Prediction:
    """
    单条轨迹的闭环预测

    发散时返回截断到最后一个有限状态的轨迹，message给出诊断信息。

    Args:
        model: 模型
        h0: 长度d_h的初值
        T: 预测步数
        inputs: T×d_x 输入序列

    Returns:
        Prediction: states为 T'×d_h（T' ≤ T）
    """
    if T < 1:
        raise ValueError(f"预测步数必须至少为1: {T}")
    h0 = np.asarray(h0, dtype=float)
    batch_inputs = None if inputs is None else np.asarray(inputs, dtype=float).reshape(1, T, -1)
    result = predict_batch(model, h0[None], T, batch_inputs)
    steps = int(result.valid_steps[0])
    outputs = None if result.outputs is None else result.outputs[0, :steps]
    return Prediction(states=result.states[0, :steps], outputs=outputs,
                      valid_steps=result.valid_steps, horizon=T, message=result.message)


def koopman_eigenvalues(model: SampledRNN) -> np.ndarray:
    """Koopman矩阵K的特征值"""
    if model.K is None:
        raise ValueError("直接回归模型没有Koopman矩阵")
    return eig_general(model.K)


def _array_to_json(arr: Optional[np.ndarray]):
    if arr is None:
        return None
    arr = np.asarray(arr)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_from_json(obj, dtype=float) -> Optional[np.ndarray]:
    if obj is None:
        return None
    data = np.asarray(obj["data"], dtype=dtype)
    shape = tuple(int(s) for s in obj["shape"])
    if data.size != int(np.prod(shape)):
        raise ModelFormatError(f"数组数据长度{data.size}与形状{shape}不符")
    return data.reshape(shape)


def _layer_to_json(layer: Optional[SampledLayer]):
    if layer is None:
        return None
    return {
        "weights": _array_to_json(layer.weights),
        "biases": _array_to_json(layer.biases),
        "activation": layer.activation,
        "pair_indices": _array_to_json(layer.pair_indices),
        "pair_points": _array_to_json(layer.pair_points),
    }


def _layer_from_json(obj) -> Optional[SampledLayer]:
    if obj is None:
        return None
    return SampledLayer(
        weights=_array_from_json(obj["weights"]),
        biases=_array_from_json(obj["biases"]),
        activation=obj["activation"],
        pair_indices=_array_from_json(obj["pair_indices"], dtype=int),
        pair_points=_array_from_json(obj["pair_points"]),
    )


def model_to_dict(model: SampledRNN) -> Dict[str, Any]:
    """模型的可JSON序列化表示"""
    return {
        "format": MODEL_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "mode": model.mode,
        "bias_in_regression": model.bias_in_regression,
        "v_mode": model.v_mode,
        "state_dict": _layer_to_json(model.state_dict),
        "input_dict": _layer_to_json(model.input_dict),
        "K": _array_to_json(model.K),
        "B": _array_to_json(model.B),
        "C": _array_to_json(model.C),
        "V": _array_to_json(model.V),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "pca": None if model.pca is None else model.pca.to_dict(),
        "fit_meta": model.fit_meta,
    }


def model_from_dict(data: Dict[str, Any]) -> SampledRNN:
    """由model_to_dict的结果重建模型"""
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise ModelFormatError("不是采样RNN模型文件")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ModelFormatError(
            f"模型文件版本{data.get('schema_version')}与当前版本{SCHEMA_VERSION}不匹配")
    try:
        return SampledRNN(
            state_dict=_layer_from_json(data["state_dict"]),
            C=_array_from_json(data["C"]),
            K=_array_from_json(data["K"]),
            input_dict=_layer_from_json(data["input_dict"]),
            B=_array_from_json(data["B"]),
            V=_array_from_json(data["V"]),
            scaler=None if data["scaler"] is None else RangeScaler.from_dict(data["scaler"]),
            pca=None if data["pca"] is None else PCAModel.from_dict(data["pca"]),
            bias_in_regression=bool(data["bias_in_regression"]),
            v_mode=data["v_mode"],
            mode=data["mode"],
            fit_meta=dict(data["fit_meta"]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"模型文件内容无效: {e}") from e


def with_transforms(model: SampledRNN, scaler: Optional[RangeScaler] = None,
                    pca: Optional[PCAModel] = None) -> SampledRNN:
    """附加数据变换信息（归一化、PCA）后返回新模型"""
    from dataclasses import replace
    return replace(model, scaler=scaler, pca=pca)


def save(model: SampledRNN, path) -> Path:
    """
    保存模型为JSON

    数组按行优先展开，键排序输出，因此保存-加载-保存得到逐字节相同的文件。

    Returns:
        Path: 文件路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(model_to_dict(model), sort_keys=True, indent=1)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    return path


def load(path) -> SampledRNN:
    """
    加载模型

    Raises:
        ModelFormatError: 文件损坏、截断或版本不匹配
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"模型文件解析失败: {e}") from e
    return model_from_dict(data)
