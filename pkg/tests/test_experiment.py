"""
实验流程测试

快速测试使用小规模配置；标记为slow的测试按基准协议运行多个种子。
"""

import json
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from sampledrnn.core import experiment
from sampledrnn.core.errors import ConfigError, SamplingError, StageError
from sampledrnn.core.koopman_rnn import load
from sampledrnn.core.metrics import ekl_with_error
from sampledrnn.utils.config import config_from_dict, load_config


@pytest.fixture
def tiny(tiny_vdp_config):
    return config_from_dict(tiny_vdp_config)


@pytest.fixture
def forced_config():
    return config_from_dict({
        "name": "tiny_forced",
        "data": {"system": "forced_vdp", "n_traj": 30, "n_test_traj": 3, "seed": 0},
        "model": {"width": 32, "rcond": 1e-10},
        "control": {"horizon": 20},
        "seeds": [0],
    })


@pytest.fixture
def csv_config(tmp_path):
    rng = np.random.default_rng(1)
    t = np.arange(200)
    frame = pd.DataFrame({
        "date": pd.date_range("2022-06-01", periods=200, freq="h").strftime("%Y-%m-%d %H:%M:%S"),
        "temp": 20.0 + 4.0 * np.sin(2 * np.pi * t / 24) + 0.1 * rng.standard_normal(200),
        "humidity": 60.0 + 10.0 * np.cos(2 * np.pi * t / 24),
    })
    path = tmp_path / "station.csv"
    frame.to_csv(path, index=False)
    return config_from_dict({
        "name": "tiny_csv",
        "data": {"source": "csv"},
        "model": {"width": 10, "rcond": 1e-6},
        "delay": {"delays": 3},
        "csv": {"path": str(path), "time_column": "date", "state_columns": ["temp", "humidity"],
                "granularities": ["hour"], "chunk_horizon": 2},
        "seeds": [0],
    })


class TestStage:
    def test_wraps_errors(self):
        with pytest.raises(StageError) as info:
            with experiment.stage("fit", 3):
                raise SamplingError("too wide")
        assert info.value.stage == "fit"
        assert info.value.seed == 3
        assert isinstance(info.value.cause, SamplingError)

    def test_nested_stage_error_passes_through(self):
        with pytest.raises(StageError) as info:
            with experiment.stage("outer"):
                with experiment.stage("inner", 1):
                    raise ValueError("bad")
        assert info.value.stage == "inner"


class TestPrepareData:
    def test_split_seeds_differ(self, tiny):
        data = experiment.prepare_data(tiny)
        assert set(data.splits()) == {"train", "validation", "test"}
        assert data.train.seed == 0
        assert data.test.seed == experiment.TEST_SEED_OFFSET
        assert data.validation.seed == experiment.VALIDATION_SEED_OFFSET
        assert data.scaler is None

    def test_protocol_overrides(self, tiny):
        protocol = experiment.data_protocol(tiny)
        assert protocol["n_traj"] == 8
        assert protocol["init_box"] == [[-3.0, 3.0], [-3.0, 3.0]]

    def test_partial_observation(self, tiny):
        cfg = replace(tiny, data=replace(tiny.data, observed=[0]),
                      delay=replace(tiny.delay, delays=6, pca_components=2))
        data = experiment.prepare_data(cfg)
        assert data.train.state_dim == 2
        assert data.pca is not None

    def test_unknown_source(self, tiny):
        with pytest.raises(ConfigError):
            experiment.prepare_data(replace(tiny, data=replace(tiny.data, source="sql")))


class TestRunExperiment:
    def test_outputs(self, tiny, tmp_path):
        summary = experiment.run_experiment(tiny, output_dir=tmp_path)
        assert summary.seeds == [0]
        assert np.isfinite(summary.values[0])
        assert (tmp_path / "seed_0" / "model.json").is_file()
        assert (tmp_path / "seed_0" / "prediction.csv").is_file()
        with open(tmp_path / "summary.json", encoding="utf-8") as f:
            written = json.load(f)
        assert written["mean"] == pytest.approx(summary.mean)
        assert written["metric"] == "mse"

    def test_reproducible(self, tiny, tmp_path):
        first = experiment.run_experiment(tiny, output_dir=tmp_path / "a")
        second = experiment.run_experiment(tiny, output_dir=tmp_path / "b")
        assert first.values == second.values
        assert (tmp_path / "a" / "seed_0" / "model.json").read_bytes() == \
            (tmp_path / "b" / "seed_0" / "model.json").read_bytes()

    def test_aggregates(self, tiny, tmp_path):
        summary = experiment.run_experiment(tiny, seeds=[0, 1, 2], output_dir=tmp_path)
        assert len(summary.values) == 3
        assert summary.mean == pytest.approx(np.mean(summary.values))
        assert summary.min <= summary.mean <= summary.max

    def test_single_step_horizon(self, tiny, tmp_path):
        cfg = replace(tiny, prediction=replace(tiny.prediction, horizon=1))
        summary = experiment.run_experiment(cfg, output_dir=tmp_path, write=False)
        assert len(summary.values) == 1
        assert not (tmp_path / "summary.json").exists()

    def test_horizon_too_long(self, tiny, tmp_path):
        cfg = replace(tiny, prediction=replace(tiny.prediction, horizon=1000))
        with pytest.raises(StageError) as info:
            experiment.run_experiment(cfg, output_dir=tmp_path)
        assert info.value.stage == "predict"

    def test_width_exceeding_pairs_fails_in_fit(self, tiny, tmp_path):
        cfg = replace(tiny, data=replace(tiny.data, n_traj=1, t_end=0.2),
                      model=replace(tiny.model, width=5))
        with pytest.raises(StageError) as info:
            experiment.run_experiment(cfg, output_dir=tmp_path)
        assert info.value.stage == "fit"
        assert info.value.seed == 0
        assert isinstance(info.value.cause, SamplingError)

    def test_unknown_system_fails_in_data(self, tiny, tmp_path):
        cfg = replace(tiny, data=replace(tiny.data, system="duffing"))
        with pytest.raises(StageError) as info:
            experiment.run_experiment(cfg, output_dir=tmp_path)
        assert info.value.stage == "data"

    def test_unknown_metric(self, tiny, tmp_path):
        cfg = replace(tiny, prediction=replace(tiny.prediction, metric="mae"))
        with pytest.raises(StageError) as info:
            experiment.run_experiment(cfg, output_dir=tmp_path)
        assert info.value.stage == "score"
        assert isinstance(info.value.cause, ConfigError)

    def test_ekl_metric(self, tiny, tmp_path):
        cfg = replace(tiny, prediction=replace(tiny.prediction, metric="ekl"))
        summary = experiment.run_experiment(cfg, output_dir=tmp_path, write=False)
        data = experiment.prepare_data(cfg)
        model, _ = experiment.fit_seed(cfg, data, 0)
        prediction = experiment.predict_seed(cfg, data, model)
        d = prediction.truth.shape[-1]
        estimate, stderr = ekl_with_error(prediction.truth.reshape(-1, d),
                                          prediction.predicted.reshape(-1, d), cfg.ekl)
        # 蒙特卡洛估计可以略小于0
        assert np.isfinite(estimate)
        assert estimate > -4.0 * stderr
        assert summary.values[0] == estimate

    def test_direct_mode(self, tiny, tmp_path):
        cfg = replace(tiny, model=replace(tiny.model, mode="direct"))
        summary = experiment.run_experiment(cfg, output_dir=tmp_path)
        assert load(summary.model_paths[0]).mode == "direct"

    def test_csv_source(self, csv_config, tmp_path):
        summary = experiment.run_experiment(csv_config, output_dir=tmp_path)
        assert len(summary.values) == 1
        assert np.isfinite(summary.values[0])
        model = load(tmp_path / "seed_0" / "model.json")
        assert model.scaler is not None
        assert model.state_dim == 3 * 4


class TestStagedCommands:
    def test_generate_fit_predict(self, tiny, tmp_path):
        paths = experiment.generate_data(tiny, output_dir=tmp_path)
        assert set(paths) == {"train", "validation", "test"}
        assert all(p.is_file() for p in paths.values())
        record = experiment.fit_models(tiny, output_dir=tmp_path)
        assert (tmp_path / "fit_summary.json").is_file()
        assert record["seeds"] == [0]
        predictions = experiment.predict_models(tiny, output_dir=tmp_path)
        assert predictions[0].is_file()

    def test_predict_without_model(self, tiny, tmp_path):
        with pytest.raises(StageError) as info:
            experiment.predict_models(tiny, output_dir=tmp_path)
        assert info.value.stage == "predict"


class TestAblation:
    def test_koopman_mode(self, tiny, tmp_path):
        table, summaries = experiment.run_ablation(tiny, "koopman_mode", output_dir=tmp_path)
        assert list(table["variant"]) == ["with", "without"]
        assert list(table["mode"]) == ["koopman", "direct"]
        assert (tmp_path / "ablation_koopman_mode.csv").is_file()
        assert set(summaries) == {"with", "without"}

    def test_sampling_mode(self, tiny, tmp_path):
        table, _ = experiment.run_ablation(tiny, "sampling_mode", output_dir=tmp_path)
        assert list(table["variant"]) == ["swim", "gaussian"]

    def test_width_sweep(self, tiny, tmp_path):
        table, _ = experiment.run_ablation(tiny, "width_sweep", values=[4, 8], output_dir=tmp_path)
        assert list(table["width"]) == [4, 8]

    def test_dt_sweep(self, tiny, tmp_path):
        table, _ = experiment.run_ablation(tiny, "dt_sweep", values=[0.1, 0.2], output_dir=tmp_path)
        assert len(table) == 4
        assert list(table["dt"]) == [0.1, 0.1, 0.2, 0.2]

    def test_unknown_axis(self, tiny, tmp_path):
        with pytest.raises(ConfigError):
            experiment.run_ablation(tiny, "depth_sweep", output_dir=tmp_path)


class TestDiagnostics:
    def test_export(self, tiny, tmp_path):
        data = experiment.prepare_data(tiny)
        model, _ = experiment.fit_seed(tiny, data, 0)
        paths = experiment.export_diagnostics(model, tmp_path)
        eig = pd.read_csv(paths["eigenvalues"])
        assert list(eig.columns) == ["index", "re", "im", "modulus"]
        assert len(eig) == 20
        assert np.all(np.diff(eig["modulus"]) <= 1e-12)
        assert len(pd.read_csv(paths["pairs"])) == 20

    def test_gaussian_model_has_no_pairs(self, tiny, tmp_path):
        cfg = replace(tiny, model=replace(tiny.model, sampling="gaussian"))
        data = experiment.prepare_data(cfg)
        model, _ = experiment.fit_seed(cfg, data, 0)
        paths = experiment.export_diagnostics(model, tmp_path)
        assert set(paths) == {"eigenvalues"}

    def test_diagnose_reuses_saved_model(self, tiny, tmp_path):
        experiment.fit_models(tiny, output_dir=tmp_path)
        results = experiment.diagnose(tiny, output_dir=tmp_path)
        assert set(results[0]) == {"eigenvalues", "pairs"}


class TestControlExperiment:
    def test_outputs(self, forced_config, tmp_path):
        summary = experiment.run_control(forced_config, output_dir=tmp_path)
        run = summary["runs"][0]
        assert run["steps"] == 20
        assert run["cumulative_cost"] == pytest.approx(run["state_cost"] + run["input_cost"])
        assert (tmp_path / "seed_0" / "control_trace.csv").is_file()
        assert (tmp_path / "control_summary.json").is_file()

    def test_delay_embedding_rejected(self, forced_config, tmp_path):
        cfg = replace(forced_config, delay=replace(forced_config.delay, delays=3))
        with pytest.raises(StageError) as info:
            experiment.run_control(cfg, output_dir=tmp_path)
        assert info.value.stage == "data"
        assert isinstance(info.value.cause, ConfigError)


@pytest.mark.slow
class TestBenchmarks:
    """基准协议下的多种子实验"""

    def test_van_der_pol(self, tmp_path):
        summary = experiment.run_experiment(load_config("vdp"), output_dir=tmp_path)
        assert summary.mean <= 1e-2
        assert max(summary.fit_seconds) <= 10.0

    def test_van_der_pol_eigenvalues(self, tmp_path):
        config = load_config("vdp")
        experiment.fit_models(config, output_dir=tmp_path)
        for seed in config.seeds:
            eig = pd.read_csv(experiment.diagnose(config, seeds=[seed], output_dir=tmp_path)[seed]["eigenvalues"])
            assert eig["modulus"].max() <= 1.0 + 1e-6

    def test_partial_observation(self, tmp_path):
        summary = experiment.run_experiment(load_config("vdp_1d"), output_dir=tmp_path)
        assert summary.mean <= 2e-2

    def test_lorenz(self, tmp_path):
        summary = experiment.run_experiment(load_config("lorenz"), output_dir=tmp_path)
        assert summary.mean <= 2e-2

    def test_rossler(self, tmp_path):
        summary = experiment.run_experiment(load_config("rossler"), output_dir=tmp_path)
        assert summary.mean <= 2e-3

    def test_forced_van_der_pol_control(self, tmp_path):
        summary = experiment.run_control(load_config("forced_vdp"), output_dir=tmp_path)
        assert summary["max_final_error_ratio"] <= 0.05
        assert 60.0 <= summary["mean_cumulative_cost"] <= 250.0
        assert max(r["fit_seconds"] for r in summary["runs"]) <= 5.0

    def test_ablation_ordering(self, tmp_path):
        config = load_config("vdp")
        sampling, _ = experiment.run_ablation(config, "sampling_mode", output_dir=tmp_path)
        koopman, _ = experiment.run_ablation(config, "koopman_mode", output_dir=tmp_path)
        swim = sampling.set_index("variant").loc["swim", "mean"]
        assert swim < sampling.set_index("variant").loc["gaussian", "mean"]
        assert swim < koopman.set_index("variant").loc["without", "mean"]

    def test_large_time_step(self, tmp_path):
        table, _ = experiment.run_ablation(load_config("vdp"), "dt_sweep", values=[0.5], output_dir=tmp_path)
        means = table.set_index("mode")["mean"]
        assert means["koopman"] <= means["direct"]
