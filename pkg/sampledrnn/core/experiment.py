"""
实验流程模块

把各模块串成完整实验：准备数据、逐个种子拟合、在测试初值上闭环预测、评分，
并写出模型文件、预测CSV和汇总JSON。另外提供对比实验、控制实验和诊断导出。
任何阶段的异常都包装为StageError，注明阶段名称和随机种子。
"""

import json
import logging
import os
import time
from contextlib import contextmanager
from copy import deepcopy
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..utils.config import ControlSettings, ExperimentConfig
from .control import LQRWeights, lqr_fit, mpc_run
from .dynamics import (
    RangeScaler, SystemSpec, Trajectory, TrajectoryDataset, fit_scaler, generate_dataset,
    make_system, select_observables, write_dataset_csv,
)
from .embedding import DelayConfig, embed_dataset
from .errors import ConfigError, SampledRNNError, StageError
from .ingest import CsvSchema, IngestResult, chunked_horizon_predict, ingest_csv
from .koopman_rnn import (
    FitOptions, SampledRNN, fit_controlled, fit_direct, fit_uncontrolled, koopman_eigenvalues,
    load, predict_batch, save, with_transforms,
)
from .metrics import ekl, mse
from .numkit import PCAModel
from .sampling import SamplingConfig, export_pairs_csv

logger = logging.getLogger(__name__)

# 测试集、验证集相对训练集的种子偏移
TEST_SEED_OFFSET = 1000
VALIDATION_SEED_OFFSET = 2000

ABLATION_AXES = ("sampling_mode", "koopman_mode", "width_sweep", "dt_sweep")
DEFAULT_WIDTHS = [4, 8, 16, 32, 64, 128, 256, 512]
DEFAULT_DTS = [0.1, 0.2, 0.3, 0.4, 0.5]
MODEL_MODES = ("koopman", "direct")


@contextmanager
def stage(name: str, seed: Optional[int] = None) -> Iterator[None]:
    """把阶段内的异常包装为StageError"""
    try:
        yield
    except StageError:
        raise
    except (SampledRNNError, ValueError, RuntimeError, ArithmeticError, OSError) as e:
        logger.error("阶段 %s 失败 (seed=%s): %s", name, seed, e)
        raise StageError(name, seed, e) from e


def write_json_atomic(data: Dict[str, Any], path) -> Path:
    """先写临时文件再替换，避免留下写了一半的汇总文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path


@dataclass
class PreparedData:
    """模型坐标下的训练/验证/测试数据，以及所用的缩放器和PCA"""
    train: TrajectoryDataset
    validation: Optional[TrajectoryDataset]
    test: TrajectoryDataset
    spec: Optional[SystemSpec] = None
    scaler: Optional[RangeScaler] = None
    pca: Optional[PCAModel] = None
    ingest: Optional[IngestResult] = None

    def splits(self) -> Dict[str, TrajectoryDataset]:
        out = {"train": self.train, "test": self.test}
        if self.validation is not None:
            out["validation"] = self.validation
        return out


def data_protocol(config: ExperimentConfig) -> Dict[str, Any]:
    """系统插件的数据协议，配置中非None的字段覆盖之"""
    spec = make_system(config.data.system, config.data.params)
    protocol = dict(spec.plugin.protocol)
    for key, value in asdict(config.data).items():
        if value is not None and key not in ("system", "params", "source", "seed", "observed"):
            protocol[key] = value
    protocol.setdefault("input_law", "none")
    protocol.setdefault("input_box", None)
    protocol.setdefault("normalize", False)
    protocol.setdefault("n_test_traj", protocol["n_traj"])
    protocol.setdefault("test_t_end", protocol["t_end"])
    protocol.setdefault("substeps", None)
    return protocol


def _prepare_csv(config: ExperimentConfig) -> PreparedData:
    settings = config.csv
    if settings is None or not settings.path:
        raise ConfigError("CSV数据源需要配置 csv.path")
    schema = CsvSchema(
        time_column=settings.time_column,
        state_columns=tuple(settings.state_columns),
        input_columns=tuple(settings.input_columns),
        granularities=tuple(settings.granularities),
        splits=tuple(settings.splits),
    )
    normalize = True if config.data.normalize is None else config.data.normalize
    result = ingest_csv(settings.path, schema, _delay_config(config), normalize=normalize)
    return PreparedData(train=result.train, validation=result.validation, test=result.test,
                        scaler=result.scaler, pca=result.pca, ingest=result)


def _delay_config(config: ExperimentConfig) -> DelayConfig:
    return DelayConfig(delays=config.delay.delays, pca_components=config.delay.pca_components)


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """
    准备实验数据

    训练集使用 data.seed，测试集和验证集分别使用 +1000、+2000 的种子独立生成；
    之后依次做部分观测选取、归一化（只在训练集上拟合）、延迟嵌入和PCA（只在训练集上拟合）。

    Args:
        config: 实验配置

    Returns:
        PreparedData: 模型坐标下的数据
    """
    if config.data.source == "csv":
        return _prepare_csv(config)
    if config.data.source != "system":
        raise ConfigError(f"未知数据源: {config.data.source}")

    spec = make_system(config.data.system, config.data.params)
    p = data_protocol(config)
    seed = int(config.data.seed)

    def generate(n_traj, t_end, offset):
        return generate_dataset(spec, n_traj, p["init_box"], t_end, p["dt"], p["input_law"],
                                p["input_box"], seed + offset, p["substeps"])

    splits = {
        "train": generate(p["n_traj"], p["t_end"], 0),
        "validation": generate(p["n_test_traj"], p["test_t_end"], VALIDATION_SEED_OFFSET),
        "test": generate(p["n_test_traj"], p["test_t_end"], TEST_SEED_OFFSET),
    }
    if config.data.observed is not None:
        splits = {k: select_observables(v, config.data.observed) for k, v in splits.items()}

    scaler = None
    if p["normalize"]:
        scaler = fit_scaler(splits["train"])
        splits = {k: scaler.apply_dataset(v) for k, v in splits.items()}

    delay = _delay_config(config)
    train, pca = embed_dataset(splits["train"], delay)
    validation, _ = embed_dataset(splits["validation"], delay, pca=pca)
    test, _ = embed_dataset(splits["test"], delay, pca=pca)
    return PreparedData(train=train, validation=validation, test=test, spec=spec,
                        scaler=scaler, pca=pca)


def fit_seed(config: ExperimentConfig, data: PreparedData, seed: int) -> Tuple[SampledRNN, float]:
    """
    用一个种子拟合模型

    计时只包括采样和最小二乘求解。

    Returns:
        Tuple[SampledRNN, float]: 模型和拟合用时（秒）
    """
    m = config.model
    if m.mode not in MODEL_MODES:
        raise ConfigError(f"未知模型模式: {m.mode}，可选: {', '.join(MODEL_MODES)}")
    snaps = data.train.snapshots()
    state_cfg = SamplingConfig(width=m.width, density=m.density, s1=m.s1, s2=m.s2,
                               activation=m.activation)
    input_cfg = None
    if m.input_width is not None:
        input_cfg = SamplingConfig(width=m.input_width, density=m.density, s1=m.s1, s2=m.s2,
                                   activation=m.activation)
    opts = FitOptions(rcond=m.rcond, bias_in_regression=m.bias_in_regression, v_mode=m.v_mode)

    start = time.perf_counter()
    if m.mode == "direct":
        model = fit_direct(snaps.H, snaps.H_next, snaps.X, snaps.Y, state_cfg, input_cfg, opts,
                           seed, sampling=m.sampling)
    elif snaps.X is not None:
        model = fit_controlled(snaps.H, snaps.H_next, snaps.X, snaps.Y, state_cfg, input_cfg,
                               opts, seed, sampling=m.sampling)
    else:
        model = fit_uncontrolled(snaps.H, snaps.H_next, snaps.Y, state_cfg, opts, seed,
                                 sampling=m.sampling)
    elapsed = time.perf_counter() - start
    return with_transforms(model, data.scaler, data.pca), elapsed


@dataclass
class SeedPrediction:
    """
    一个种子的测试预测

    predicted与truth为 n×T×d（模型坐标），发散后的位置为NaN。
    """
    predicted: np.ndarray
    truth: np.ndarray
    valid_steps: np.ndarray
    dt: float

    @property
    def diverged(self) -> bool:
        return bool(np.any(self.valid_steps < self.predicted.shape[1]))

    def to_dataset(self) -> TrajectoryDataset:
        """预测轨迹（h_1..h_T），可按轨迹CSV格式写出"""
        trajectories = []
        for n in range(self.predicted.shape[0]):
            steps = int(self.valid_steps[n])
            trajectories.append(Trajectory(times=np.arange(1, steps + 1) * self.dt,
                                           states=self.predicted[n, :steps]))
        return TrajectoryDataset(trajectories, dt=self.dt, meta={"kind": "prediction"})


def predict_seed(config: ExperimentConfig, data: PreparedData, model: SampledRNN) -> SeedPrediction:
    """
    在测试数据上闭环预测

    合成数据从每条测试轨迹的初值出发预测horizon步（默认整条轨迹）；
    CSV数据使用分块预测，长度L的真值窗口每次预测 csv.chunk_horizon 步。
    """
    if data.ingest is not None:
        horizon = config.csv.chunk_horizon
        raw = data.ingest.raw["test"]
        inputs = data.ingest.raw_inputs.get("test") if model.is_controlled else None
        predicted, indices = chunked_horizon_predict(model, raw, config.delay.delays, horizon, inputs)
        truth = raw[indices]
        if data.scaler is not None:
            predicted, truth = data.scaler.apply(predicted), data.scaler.apply(truth)
        valid = np.array([predicted.shape[0]]) if np.all(np.isfinite(predicted)) else np.array([0])
        return SeedPrediction(predicted=predicted[None], truth=truth[None], valid_steps=valid,
                              dt=data.test.dt)

    trajectories = data.test.trajectories
    length = min(len(t) for t in trajectories) - 1
    horizon = config.prediction.horizon if config.prediction.horizon is not None else length
    if not 1 <= horizon <= length:
        raise ConfigError(f"预测步数{horizon}超出测试轨迹长度{length}")
    h0 = np.stack([t.states[0] for t in trajectories])
    truth = np.stack([t.states[1:horizon + 1] for t in trajectories])
    inputs = None
    if model.is_controlled:
        inputs = np.stack([t.inputs[:horizon] for t in trajectories])
    result = predict_batch(model, h0, horizon, inputs)
    return SeedPrediction(predicted=result.states, truth=truth, valid_steps=result.valid_steps,
                          dt=data.test.dt)


def score_seed(config: ExperimentConfig, prediction: SeedPrediction) -> float:
    """按配置的指标评分；预测发散时记为inf"""
    metric = config.prediction.metric
    if metric not in ("mse", "ekl"):
        raise ConfigError(f"未知评价指标: {metric}")
    if prediction.diverged:
        logger.warning("预测发散，指标记为inf")
        return float("inf")
    if metric == "mse":
        return mse(prediction.predicted, prediction.truth)
    d = prediction.truth.shape[-1]
    return ekl(prediction.truth.reshape(-1, d), prediction.predicted.reshape(-1, d), config.ekl)


@dataclass
class RunSummary:
    """一次实验的汇总：每个种子的指标、拟合用时和模型文件"""
    name: str
    metric: str
    seeds: List[int] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    fit_seconds: List[float] = field(default_factory=list)
    model_paths: List[str] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else float("nan")

    @property
    def min(self) -> float:
        return float(np.min(self.values)) if self.values else float("nan")

    @property
    def max(self) -> float:
        return float(np.max(self.values)) if self.values else float("nan")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "metric": self.metric,
            "seeds": list(self.seeds),
            "values": list(self.values),
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "fit_seconds": list(self.fit_seconds),
            "model_paths": list(self.model_paths),
        }


def _seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}"


def run_experiment(config: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
                   output_dir=None, data: Optional[PreparedData] = None,
                   write: bool = True) -> RunSummary:
    """
    运行完整实验：对每个种子拟合、预测、评分并写出结果

    Args:
        config: 实验配置
        seeds: 覆盖配置中的种子
        output_dir: 覆盖配置中的输出目录
        data: 已准备好的数据（对比实验中复用）
        write: 是否写文件

    Returns:
        RunSummary: 汇总

    Raises:
        StageError: 某个阶段失败
    """
    seeds = list(config.seeds if seeds is None else seeds)
    out = Path(output_dir) if output_dir is not None else config.out_dir
    if data is None:
        with stage("data"):
            data = prepare_data(config)

    summary = RunSummary(name=config.name, metric=config.prediction.metric)
    for seed in seeds:
        with stage("fit", seed):
            model, seconds = fit_seed(config, data, seed)
        with stage("predict", seed):
            prediction = predict_seed(config, data, model)
        with stage("score", seed):
            value = score_seed(config, prediction)
        logger.info("种子 %d: %s=%.6g, 拟合用时 %.3fs", seed, summary.metric, value, seconds)
        summary.seeds.append(int(seed))
        summary.values.append(value)
        summary.fit_seconds.append(seconds)
        if write:
            with stage("write", seed):
                seed_dir = _seed_dir(out, seed)
                summary.model_paths.append(str(save(model, seed_dir / "model.json")))
                write_dataset_csv(prediction.to_dataset(), seed_dir / "prediction.csv",
                                  extra_meta={"seed": seed, "config": config.name})
    if write:
        with stage("write"):
            write_json_atomic(summary.to_dict(), out / "summary.json")
    return summary


def generate_data(config: ExperimentConfig, output_dir=None) -> Dict[str, Path]:
    """写出训练/验证/测试轨迹CSV（模型坐标）"""
    out = Path(output_dir) if output_dir is not None else config.out_dir
    with stage("data"):
        data = prepare_data(config)
    extra = {"config": config.name}
    if data.scaler is not None:
        extra["normalization"] = data.scaler.to_dict()
    paths = {}
    with stage("write"):
        for name, dataset in data.splits().items():
            paths[name] = write_dataset_csv(dataset, out / "data" / f"{name}.csv", extra_meta=extra)
    return paths


def fit_models(config: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
               output_dir=None) -> Dict[str, Any]:
    """逐个种子拟合并保存模型，写出拟合用时汇总"""
    seeds = list(config.seeds if seeds is None else seeds)
    out = Path(output_dir) if output_dir is not None else config.out_dir
    with stage("data"):
        data = prepare_data(config)
    record: Dict[str, Any] = {"name": config.name, "seeds": [], "fit_seconds": [], "model_paths": []}
    for seed in seeds:
        with stage("fit", seed):
            model, seconds = fit_seed(config, data, seed)
        with stage("write", seed):
            path = save(model, _seed_dir(out, seed) / "model.json")
        record["seeds"].append(int(seed))
        record["fit_seconds"].append(seconds)
        record["model_paths"].append(str(path))
    with stage("write"):
        write_json_atomic(record, out / "fit_summary.json")
    return record


def predict_models(config: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
                   output_dir=None) -> Dict[int, Path]:
    """加载已保存的模型，在测试数据上预测并写出CSV"""
    seeds = list(config.seeds if seeds is None else seeds)
    out = Path(output_dir) if output_dir is not None else config.out_dir
    with stage("data"):
        data = prepare_data(config)
    paths = {}
    for seed in seeds:
        with stage("predict", seed):
            model = load(_seed_dir(out, seed) / "model.json")
            prediction = predict_seed(config, data, model)
        with stage("write", seed):
            paths[seed] = write_dataset_csv(prediction.to_dataset(),
                                            _seed_dir(out, seed) / "prediction.csv",
                                            extra_meta={"seed": seed, "config": config.name})
    return paths


def _ablation_variants(config: ExperimentConfig, axis: str,
                       values: Optional[Sequence[Any]]) -> List[Tuple[str, Dict[str, Any], ExperimentConfig]]:
    variants = []
    if axis == "sampling_mode":
        for sampling in values or ("swim", "gaussian"):
            cfg = replace(config, model=replace(config.model, sampling=sampling))
            variants.append((sampling, {"sampling": sampling}, cfg))
    elif axis == "koopman_mode":
        for label in values or ("with", "without"):
            mode = {"with": "koopman", "without": "direct"}.get(label, label)
            cfg = replace(config, model=replace(config.model, mode=mode))
            variants.append((label, {"mode": mode}, cfg))
    elif axis == "width_sweep":
        for width in values or DEFAULT_WIDTHS:
            cfg = replace(config, model=replace(config.model, width=int(width)))
            variants.append((f"width={width}", {"width": int(width)}, cfg))
    elif axis == "dt_sweep":
        protocol = data_protocol(config)
        for dt in values or DEFAULT_DTS:
            dt = float(dt)
            # 终止时间取步长的整数倍
            t_end = dt * max(1, round(protocol["t_end"] / dt))
            test_t_end = dt * max(1, round(protocol["test_t_end"] / dt))
            data_cfg = replace(config.data, dt=dt, t_end=t_end, test_t_end=test_t_end, substeps=None)
            for label, mode in (("with", "koopman"), ("without", "direct")):
                cfg = replace(config, data=data_cfg, model=replace(config.model, mode=mode))
                variants.append((f"dt={dt:g}/{label}", {"dt": dt, "mode": mode}, cfg))
    else:
        raise ConfigError(f"未知对比维度: {axis}，可选: {', '.join(ABLATION_AXES)}")
    return variants


def run_ablation(config: ExperimentConfig, axis: str, values: Optional[Sequence[Any]] = None,
                 seeds: Optional[Sequence[int]] = None,
                 output_dir=None) -> Tuple[pd.DataFrame, Dict[str, RunSummary]]:
    """
    对比实验

    axis取 sampling_mode（swim/gaussian）、koopman_mode（with/without）、
    width_sweep（默认4到512）、dt_sweep（默认0.1到0.5，每个步长两种模式）。
    数据只在数据配置变化时重新生成。

    Returns:
        Tuple[pd.DataFrame, Dict[str, RunSummary]]: 对比表和各变体的汇总
    """
    out = Path(output_dir) if output_dir is not None else config.out_dir
    variants = _ablation_variants(deepcopy(config), axis, values)
    cache: Dict[str, PreparedData] = {}
    summaries: Dict[str, RunSummary] = {}
    rows = []
    for label, params, cfg in variants:
        key = json.dumps(asdict(cfg.data), sort_keys=True)
        if key not in cache:
            with stage("data"):
                cache[key] = prepare_data(cfg)
        safe = label.replace("/", "_").replace("=", "_")
        summary = run_experiment(cfg, seeds=seeds, output_dir=out / axis / safe, data=cache[key])
        summaries[label] = summary
        rows.append({
            "axis": axis, "variant": label, **params, "metric": summary.metric,
            "mean": summary.mean, "min": summary.min, "max": summary.max,
            "fit_seconds_mean": float(np.mean(summary.fit_seconds)),
            "n_seeds": len(summary.values),
        })
        logger.info("对比 %s: %s 均值=%.6g", axis, label, summary.mean)
    table = pd.DataFrame(rows)
    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / f"ablation_{axis}.csv", index=False, float_format="%.17g")
    return table, summaries


def run_control(config: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
                output_dir=None) -> Dict[str, Any]:
    """
    控制实验：每个种子拟合代理模型，设计LQR，并在真实系统上闭环运行

    代理模型必须工作在物理状态坐标上（不归一化、不做延迟嵌入）。

    Returns:
        Dict[str, Any]: 汇总（也写入 control_summary.json）
    """
    seeds = list(config.seeds if seeds is None else seeds)
    out = Path(output_dir) if output_dir is not None else config.out_dir
    settings = config.control or ControlSettings()
    with stage("data"):
        if not _delay_config(config).is_identity:
            raise ConfigError("控制实验不支持延迟嵌入")
        data = prepare_data(config)
        if data.scaler is not None:
            raise ConfigError("控制实验要求数据不做归一化")
        protocol = data_protocol(config)

    runs = []
    for seed in seeds:
        with stage("fit", seed):
            model, seconds = fit_seed(config, data, seed)
        with stage("control", seed):
            weights = LQRWeights.diagonal(settings.Q, settings.R)
            X = data.train.snapshots().X
            controller = lqr_fit(model, weights, settings.target, X_samples=X,
                                 input_bounds=settings.input_bounds, tol=settings.tol,
                                 max_iter=settings.max_iter, method=settings.dare_method)
            trace = mpc_run(data.spec, model, controller, settings.h0, settings.horizon,
                            protocol["dt"], protocol["substeps"])
        with stage("write", seed):
            seed_dir = _seed_dir(out, seed)
            trace.write_csv(seed_dir / "control_trace.csv")
            save(model, seed_dir / "model.json")
        runs.append({"seed": int(seed), "fit_seconds": seconds, **trace.summary()})

    costs = [r["cumulative_cost"] for r in runs]
    summary = {
        "name": config.name,
        "runs": runs,
        "mean_cumulative_cost": float(np.mean(costs)),
        "min_cumulative_cost": float(np.min(costs)),
        "max_cumulative_cost": float(np.max(costs)),
        "max_final_error_ratio": float(max(r["final_error_ratio"] for r in runs)),
    }
    with stage("write"):
        write_json_atomic(summary, out / "control_summary.json")
    return summary


def export_diagnostics(model: SampledRNN, output_dir) -> Dict[str, Path]:
    """
    导出特征值表（index, re, im, modulus）和点对表

    高斯采样的模型没有点对来源，只导出特征值；直接回归模型没有K，只导出点对。

    Returns:
        Dict[str, Path]: 写出的文件
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}
    if model.K is not None:
        eigs = koopman_eigenvalues(model)
        frame = pd.DataFrame({"index": np.arange(eigs.size), "re": eigs.real, "im": eigs.imag,
                              "modulus": np.abs(eigs)})
        paths["eigenvalues"] = out / "eigenvalues.csv"
        frame.to_csv(paths["eigenvalues"], index=False, float_format="%.17g")
    if model.state_dict.has_provenance:
        paths["pairs"] = out / "pairs.csv"
        export_pairs_csv(model.state_dict, paths["pairs"])
    else:
        logger.info("状态字典没有点对来源，跳过点对导出")
    return paths


def diagnose(config: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
             output_dir=None) -> Dict[int, Dict[str, Path]]:
    """对每个种子导出诊断文件；已有模型文件时直接加载，否则重新拟合"""
    seeds = list(config.seeds if seeds is None else seeds)
    out = Path(output_dir) if output_dir is not None else config.out_dir
    data = None
    results = {}
    for seed in seeds:
        path = _seed_dir(out, seed) / "model.json"
        if path.is_file():
            with stage("fit", seed):
                model = load(path)
        else:
            if data is None:
                with stage("data"):
                    data = prepare_data(config)
            with stage("fit", seed):
                model, _ = fit_seed(config, data, seed)
        with stage("write", seed):
            results[seed] = export_diagnostics(model, _seed_dir(out, seed) / "diagnostics")
    return results
