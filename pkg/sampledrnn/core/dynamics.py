"""
动力系统与轨迹数据模块

基准系统的向量场、固定步长RK4积分、轨迹数据集生成、[-3, 3]区间归一化，
以及轨迹CSV读写（附带JSON元数据）。
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..plugins.base import SystemPlugin, get_system_plugin
from .errors import DimensionError, IntegrationError

logger = logging.getLogger(__name__)

# 状态分量的绝对值超过该值即认为积分发散
BLOWUP_THRESHOLD = 1e6


@dataclass(frozen=True)
class SystemSpec:
    """动力系统描述：种类、参数和维度"""
    kind: str
    params: Dict[str, Any]
    state_dim: int
    input_dim: int

    @property
    def plugin(self) -> SystemPlugin:
        return get_system_plugin(self.kind)


def make_system(kind: str, params: Optional[Dict[str, Any]] = None) -> SystemSpec:
    """
    构造系统描述

    Args:
        kind: 系统名称（vdp, forced_vdp, lorenz63, rossler, linear）
        params: 覆盖默认参数

    Returns:
        SystemSpec: 系统描述
    """
    plugin = get_system_plugin(kind)
    merged = plugin.merged_params(params)
    state_dim, input_dim = plugin.dims(merged)
    return SystemSpec(kind=plugin.name, params=merged, state_dim=state_dim, input_dim=input_dim)


def ode_rhs(spec: SystemSpec, h, x=None, strict: bool = False) -> np.ndarray:
    """
    计算向量场

    Args:
        spec: 系统描述
        h: 状态（支持批量，最后一维为状态分量）
        x: 输入；受迫系统省略时按 x = 0 处理
        strict: 为True时受迫系统缺少输入直接报错

    Returns:
        np.ndarray: 导数
    """
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != spec.state_dim:
        raise DimensionError(f"状态维度{h.shape[-1]}与系统维度{spec.state_dim}不一致")
    if spec.input_dim == 0:
        if x is not None and np.size(x):
            raise DimensionError(f"系统{spec.kind}没有输入")
        x = None
    elif x is None:
        if strict:
            raise DimensionError(f"受迫系统{spec.kind}需要输入")
        x = np.zeros(h.shape[:-1] + (spec.input_dim,))
    else:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != spec.input_dim:
            raise DimensionError(f"输入维度{x.shape[-1]}与系统输入维度{spec.input_dim}不一致")
    return spec.plugin.rhs(h, x, spec.params)


def default_substeps(dt: float) -> int:
    """默认子步数：dt=0.1时为10，dt=0.01时为1"""
    return max(1, int(round(dt / 0.01)))


def _step_count(t_end: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError(f"时间步长必须为正: {dt}")
    if t_end < 0:
        raise ValueError(f"终止时间不能为负: {t_end}")
    steps = int(round(t_end / dt))
    if abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"终止时间{t_end}不是步长{dt}的整数倍")
    return steps


def integrate_batch(spec: SystemSpec, h0, t_end: float, dt: float, inputs=None,
                    substeps: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    对一批初值同时做固定步长RK4积分

    每个输出步内使用substeps个RK4子步，输入在整个输出步内保持不变。

    Args:
        spec: 系统描述
        h0: n×d 初值
        t_end: 终止时间
        dt: 输出步长
        inputs: n×steps×d_x 分段常数输入，可选
        substeps: 每个输出步的子步数

    Returns:
        Tuple[np.ndarray, np.ndarray]: 时间 (steps+1,) 与状态 n×(steps+1)×d
    """
    if substeps < 1:
        raise ValueError(f"子步数必须至少为1: {substeps}")
    h0 = np.atleast_2d(np.asarray(h0, dtype=float))
    if h0.shape[1] != spec.state_dim:
        raise DimensionError(f"初值维度{h0.shape[1]}与系统维度{spec.state_dim}不一致")
    steps = _step_count(t_end, dt)
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 2:
            inputs = inputs[None]
        if inputs.shape[:2] != (h0.shape[0], steps):
            raise DimensionError(f"输入形状{inputs.shape}与步数{steps}不匹配")

    states = np.empty((h0.shape[0], steps + 1, spec.state_dim))
    states[:, 0] = h0
    h = h0.copy()
    sub_dt = dt / substeps
    for k in range(steps):
        x = None if inputs is None else inputs[:, k]
        for _ in range(substeps):
            k1 = ode_rhs(spec, h, x)
            k2 = ode_rhs(spec, h + 0.5 * sub_dt * k1, x)
            k3 = ode_rhs(spec, h + 0.5 * sub_dt * k2, x)
            k4 = ode_rhs(spec, h + sub_dt * k3, x)
            h = h + (sub_dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bad = ~np.all(np.isfinite(h) & (np.abs(h) <= BLOWUP_THRESHOLD), axis=1)
        if np.any(bad):
            raise IntegrationError(
                f"第{k + 1}步积分发散（轨迹 {np.flatnonzero(bad).tolist()}）", step=k + 1)
        states[:, k + 1] = h
    times = np.arange(steps + 1) * dt
    return times, states


@dataclass
class Trajectory:
    """
    单条轨迹

    inputs的第t行是从 t 到 t+1 这一步施加的输入，因此比states少一行。
    outputs与states按同一时刻对齐。
    """
    times: np.ndarray
    states: np.ndarray
    inputs: Optional[np.ndarray] = None
    outputs: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.states.shape[0]


def integrate(spec: SystemSpec, h0, t_end: float, dt: float, inputs=None,
              substeps: int = 1) -> Trajectory:
    """
    单条轨迹的RK4积分

    Args:
        spec: 系统描述
        h0: 初值
        t_end: 终止时间
        dt: 输出步长
        inputs: steps×d_x 分段常数输入，可选
        substeps: 每个输出步的子步数

    Returns:
        Trajectory: 时刻 0, dt, ..., t_end 的状态
    """
    batch_inputs = None
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        batch_inputs = inputs[None]
    times, states = integrate_batch(spec, np.asarray(h0, dtype=float)[None], t_end, dt,
                                    batch_inputs, substeps)
    return Trajectory(times=times, states=states[0], inputs=inputs)


@dataclass(frozen=True)
class SnapshotMatrices:
    """快照矩阵，列为样本：H, H' 为 d_h×N，X 为 d_x×N，Y 为 d_y×N"""
    H: np.ndarray
    H_next: np.ndarray
    X: Optional[np.ndarray]
    Y: Optional[np.ndarray]


@dataclass
class TrajectoryDataset:
    """轨迹数据集：所有轨迹共享步长和状态维度"""
    trajectories: List[Trajectory]
    dt: float
    seed: Optional[int] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("数据集至少需要一条轨迹")
        dims = {t.states.shape[1] for t in self.trajectories}
        if len(dims) != 1:
            raise DimensionError(f"轨迹状态维度不一致: {sorted(dims)}")

    @property
    def state_dim(self) -> int:
        return self.trajectories[0].states.shape[1]

    @property
    def input_dim(self) -> int:
        inputs = self.trajectories[0].inputs
        return 0 if inputs is None else inputs.shape[1]

    @property
    def output_dim(self) -> int:
        outputs = self.trajectories[0].outputs
        return 0 if outputs is None else outputs.shape[1]

    @property
    def n_pairs(self) -> int:
        return sum(len(t) - 1 for t in self.trajectories)

    def all_states(self) -> np.ndarray:
        """所有轨迹的全部快照按行堆叠"""
        return np.concatenate([t.states for t in self.trajectories], axis=0)

    def snapshots(self) -> SnapshotMatrices:
        """
        构造 H, H'（以及X, Y）

        H取每条轨迹除最后一个以外的状态，H'取除第一个以外的状态，
        点对不跨越轨迹边界。
        """
        H = np.concatenate([t.states[:-1] for t in self.trajectories], axis=0).T
        H_next = np.concatenate([t.states[1:] for t in self.trajectories], axis=0).T
        X = None
        if self.input_dim:
            X = np.concatenate([t.inputs[:len(t) - 1] for t in self.trajectories], axis=0).T
        Y = None
        if self.output_dim:
            Y = np.concatenate([t.outputs[:-1] for t in self.trajectories], axis=0).T
        return SnapshotMatrices(H=H, H_next=H_next, X=X, Y=Y)

    def map_states(self, fn, **meta) -> "TrajectoryDataset":
        """对每条轨迹的状态逐行变换，返回新的数据集"""
        trajectories = [replace(t, states=fn(t.states)) for t in self.trajectories]
        return TrajectoryDataset(trajectories, self.dt, self.seed, {**self.meta, **meta})


def generate_dataset(spec: SystemSpec, n_traj: int, init_box: Sequence[Sequence[float]],
                     t_end: float, dt: float, input_law: str = "none",
                     input_box: Optional[Sequence[Sequence[float]]] = None,
                     seed: int = 0, substeps: Optional[int] = None) -> TrajectoryDataset:
    """
    生成轨迹数据集

    初值在init_box上独立均匀分布；受迫系统的输入在每一步独立地在input_box上
    均匀抽取（随机控制，不来自任何控制器）。每条轨迹使用由 (seed, 轨迹序号)
    派生的独立随机数流。

    Args:
        spec: 系统描述
        n_traj: 轨迹条数
        init_box: 每个状态分量的区间
        t_end: 终止时间
        dt: 步长
        input_law: none 或 uniform_random
        input_box: 每个输入分量的区间
        seed: 随机种子
        substeps: RK4子步数，默认由dt决定

    Returns:
        TrajectoryDataset: 数据集
    """
    init_box = np.asarray(init_box, dtype=float)
    if init_box.shape != (spec.state_dim, 2):
        raise DimensionError(f"初值区域形状{init_box.shape}应为({spec.state_dim}, 2)")
    if input_law not in ("none", "uniform_random"):
        raise ValueError(f"未知输入规律: {input_law}")
    use_inputs = input_law == "uniform_random" and spec.input_dim > 0
    if use_inputs:
        input_box = np.asarray(input_box, dtype=float)
        if input_box.shape != (spec.input_dim, 2):
            raise DimensionError(f"输入区域形状{input_box.shape}应为({spec.input_dim}, 2)")
    steps = _step_count(t_end, dt)
    substeps = substeps or default_substeps(dt)

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n_traj)]
    h0 = np.array([rng.uniform(init_box[:, 0], init_box[:, 1]) for rng in streams])
    inputs = None
    if use_inputs:
        inputs = np.array([rng.uniform(input_box[:, 0], input_box[:, 1], size=(steps, spec.input_dim))
                           for rng in streams])
    elif spec.input_dim > 0:
        inputs = np.zeros((n_traj, steps, spec.input_dim))

    times, states = integrate_batch(spec, h0, t_end, dt, inputs, substeps)
    trajectories = [
        Trajectory(times=times.copy(), states=states[n],
                   inputs=None if inputs is None else inputs[n])
        for n in range(n_traj)
    ]
    logger.info("生成数据集: 系统=%s, 轨迹=%d, 步数=%d, dt=%g", spec.kind, n_traj, steps, dt)
    meta = {"system": spec.kind, "params": _jsonable(spec.params), "seed": int(seed),
            "t_end": t_end, "substeps": substeps, "input_law": input_law}
    return TrajectoryDataset(trajectories, dt=dt, seed=int(seed), meta=meta)


def select_observables(dataset: TrajectoryDataset, indices: Sequence[int]) -> TrajectoryDataset:
    """只保留部分状态分量（部分观测）"""
    indices = list(indices)
    return dataset.map_states(lambda s: s[:, indices], observed=indices)


@dataclass(frozen=True)
class RangeScaler:
    """逐维仿射缩放：scaled = value * scale + offset"""
    scale: np.ndarray
    offset: np.ndarray
    lower: float = -3.0
    upper: float = 3.0

    def apply(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.offset

    def invert(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.offset) / self.scale

    def apply_dataset(self, dataset: TrajectoryDataset) -> TrajectoryDataset:
        return dataset.map_states(self.apply, normalization=self.to_dict())

    def to_dict(self) -> dict:
        return {"scale": self.scale.tolist(), "offset": self.offset.tolist(),
                "lower": self.lower, "upper": self.upper}

    @classmethod
    def from_dict(cls, data: dict) -> "RangeScaler":
        return cls(scale=np.asarray(data["scale"], dtype=float),
                   offset=np.asarray(data["offset"], dtype=float),
                   lower=float(data["lower"]), upper=float(data["upper"]))


def fit_scaler(data, interval: Tuple[float, float] = (-3.0, 3.0)) -> RangeScaler:
    """
    拟合缩放：训练数据每一维的最小值映射到区间下端，最大值映射到上端

    某一维取值为常数时，缩放系数固定为1，只做中心化。

    Args:
        data: TrajectoryDataset 或 N×d 数组
        interval: 目标区间

    Returns:
        RangeScaler: 缩放器
    """
    if isinstance(data, TrajectoryDataset):
        data = data.all_states()
    data = np.atleast_2d(np.asarray(data, dtype=float))
    lower, upper = float(interval[0]), float(interval[1])
    if not upper > lower:
        raise ValueError(f"目标区间无效: {interval}")
    lo, hi = data.min(axis=0), data.max(axis=0)
    span = hi - lo
    degenerate = span <= 0
    scale = np.where(degenerate, 1.0, (upper - lower) / np.where(degenerate, 1.0, span))
    center = 0.5 * (lo + hi)
    offset = 0.5 * (lower + upper) - center * scale
    return RangeScaler(scale=scale, offset=offset, lower=lower, upper=upper)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def sidecar_path(path) -> Path:
    """CSV对应的元数据文件路径"""
    return Path(path).with_suffix(".json")


def dataset_frame(dataset: TrajectoryDataset) -> pd.DataFrame:
    """
    转换为轨迹表：traj_id, t, h1..hd[, x1..][, y1..]

    输入比状态少一行，每条轨迹最后一行的输入列留空。
    """
    frames = []
    for n, traj in enumerate(dataset.trajectories):
        columns = {"traj_id": np.full(len(traj), n), "t": traj.times}
        for k in range(traj.states.shape[1]):
            columns[f"h{k + 1}"] = traj.states[:, k]
        if traj.inputs is not None:
            padded = np.full((len(traj), traj.inputs.shape[1]), np.nan)
            padded[:traj.inputs.shape[0]] = traj.inputs[:len(traj)]
            for k in range(padded.shape[1]):
                columns[f"x{k + 1}"] = padded[:, k]
        if traj.outputs is not None:
            for k in range(traj.outputs.shape[1]):
                columns[f"y{k + 1}"] = traj.outputs[:, k]
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def write_dataset_csv(dataset: TrajectoryDataset, path, extra_meta: Optional[Dict[str, Any]] = None) -> Path:
    """
    写入轨迹CSV，并在同名JSON中记录dt、系统、参数、种子和归一化信息

    Returns:
        Path: CSV路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset_frame(dataset).to_csv(path, index=False, float_format="%.17g")
    meta = {"dt": dataset.dt, "seed": dataset.seed, **_jsonable(dataset.meta)}
    if extra_meta:
        meta.update(_jsonable(extra_meta))
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return path


def read_dataset_csv(path) -> TrajectoryDataset:
    """
    读取轨迹CSV（及同名JSON元数据）

    Returns:
        TrajectoryDataset: 数据集
    """
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    for column in ("traj_id", "t"):
        if column not in frame.columns:
            raise ValueError(f"轨迹CSV缺少列: {column}")
    meta: Dict[str, Any] = {}
    if sidecar_path(path).exists():
        with open(sidecar_path(path), "r", encoding="utf-8") as f:
            meta = json.load(f)

    def pick(prefix):
        cols = [c for c in frame.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return sorted(cols, key=lambda c: int(c[len(prefix):]))

    h_cols, x_cols, y_cols = pick("h"), pick("x"), pick("y")
    trajectories = []
    for _, group in frame.groupby("traj_id", sort=True):
        states = group[h_cols].to_numpy(dtype=float)
        inputs = group[x_cols].to_numpy(dtype=float)[:-1] if x_cols else None
        outputs = group[y_cols].to_numpy(dtype=float) if y_cols else None
        trajectories.append(Trajectory(times=group["t"].to_numpy(dtype=float), states=states,
                                       inputs=inputs, outputs=outputs))
    dt = meta.pop("dt", None)
    if dt is None:
        dt = float(np.median(np.diff(trajectories[0].times)))
    seed = meta.pop("seed", None)
    return TrajectoryDataset(trajectories, dt=float(dt), seed=seed, meta=meta)
