"""
隐藏层采样测试
"""

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from sampledrnn.core.errors import DegenerateDataError, DimensionError, SamplingError
from sampledrnn.core.sampling import (
    SampledLayer, SamplingConfig, _candidate_pool, apply_layer, construct_layer, export_pairs_csv,
    gaussian_layer, identity_layer, layer_streams, pairs_frame, sample_layer, sample_pairs,
)


class TestConstructLayer:
    def test_horizontal_pair(self):
        layer = construct_layer(np.array([[0.0, 0.0], [2.0, 0.0]]), [[0, 1]], SamplingConfig(width=1))
        np.testing.assert_allclose(layer.weights, [[0.5, 0.0]])
        np.testing.assert_allclose(layer.biases, [0.0])

    def test_vertical_pair(self):
        layer = construct_layer(np.array([[1.0, 1.0], [1.0, 3.0]]), [[0, 1]], SamplingConfig(width=1))
        np.testing.assert_allclose(layer.weights, [[0.0, 0.5]])
        np.testing.assert_allclose(layer.biases, [-0.5])

    def test_anchor_identities(self, rng):
        data = rng.standard_normal((30, 3))
        cfg = SamplingConfig(width=20, s1=1.5, s2=-0.3)
        layer = sample_layer(data, None, cfg, rng)
        h1, h2 = layer.pair_points[:, 0], layer.pair_points[:, 1]
        pre1 = np.einsum("ij,ij->i", layer.weights, h1) + layer.biases
        pre2 = np.einsum("ij,ij->i", layer.weights, h2) + layer.biases
        np.testing.assert_allclose(pre1, -0.3, atol=1e-12)
        np.testing.assert_allclose(pre2, 1.2, atol=1e-12)

    def test_provenance_recorded(self, rng):
        data = rng.standard_normal((10, 2))
        layer = sample_layer(data, None, SamplingConfig(width=5), rng)
        assert layer.has_provenance
        np.testing.assert_array_equal(layer.pair_points[:, 0], data[layer.pair_indices[:, 0]])
        np.testing.assert_array_equal(layer.pair_points[:, 1], data[layer.pair_indices[:, 1]])

    def test_degenerate_pair(self):
        with pytest.raises(DegenerateDataError):
            construct_layer(np.zeros((2, 2)), [[0, 1]], SamplingConfig(width=1))

    def test_index_out_of_range(self):
        with pytest.raises(DimensionError):
            construct_layer(np.zeros((2, 2)), [[0, 5]], SamplingConfig(width=1))


class TestApplyLayer:
    def test_identity(self):
        points = np.array([[1.0, -2.0], [0.5, 3.0]])
        np.testing.assert_array_equal(apply_layer(identity_layer(2), points), points)

    def test_zero_weights(self):
        layer = SampledLayer(weights=np.zeros((3, 2)), biases=np.zeros(3), activation="tanh")
        np.testing.assert_array_equal(apply_layer(layer, [[1.0, 2.0]]), np.zeros((1, 3)))

    def test_tanh_value(self):
        layer = SampledLayer(weights=np.array([[0.5, 0.0]]), biases=np.zeros(1), activation="tanh")
        np.testing.assert_allclose(apply_layer(layer, [2.0, 0.0]), [0.7615941559557649], atol=1e-12)

    def test_relu(self):
        layer = SampledLayer(weights=np.array([[1.0], [-1.0]]), biases=np.zeros(2), activation="relu")
        np.testing.assert_array_equal(apply_layer(layer, [[2.0]]), [[2.0, 0.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply_layer(identity_layer(2), np.ones((4, 3)))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            SampledLayer(weights=np.eye(2), biases=np.zeros(2), activation="sigmoid")

    def test_identity_flag(self):
        assert identity_layer(3).is_identity
        assert not gaussian_layer(3, 3, np.random.default_rng(0)).is_identity


class TestSamplePairs:
    def test_two_points(self, rng):
        pairs = sample_pairs(np.array([[0.0], [1.0]]), None, 1, "uniform", rng)
        np.testing.assert_array_equal(pairs, [[0, 1]])

    def test_pairs_distinct_and_ordered(self, rng):
        data = rng.standard_normal((40, 2))
        pairs = sample_pairs(data, None, 30, "uniform", rng)
        assert np.all(pairs[:, 0] < pairs[:, 1])
        assert len({tuple(p) for p in pairs}) == 30

    def test_gradient_weighted_frequencies(self):
        data = np.array([[0.0], [1.0], [2.0]])
        targets = np.array([[0.0], [0.0], [10.0]])
        rng = np.random.default_rng(2024)
        counts = {}
        draws = 10000
        for _ in range(draws):
            i, j = sample_pairs(data, targets, 1, "gradient_weighted", rng)[0]
            counts[(i, j)] = counts.get((i, j), 0) + 1
        assert (0, 1) not in counts
        observed = [counts.get((0, 2), 0), counts.get((1, 2), 0)]
        _, p_value = stats.chisquare(observed, [draws / 3.0, 2.0 * draws / 3.0])
        assert p_value > 1e-3

    def test_degenerate_pairs_filtered(self):
        data = np.array([[0.0], [0.0], [1.0]])
        for seed in range(20):
            pairs = sample_pairs(data, None, 2, "uniform", np.random.default_rng(seed))
            for i, j in pairs:
                assert abs(data[j, 0] - data[i, 0]) >= 1e-10

    def test_all_points_identical(self, rng):
        with pytest.raises(DegenerateDataError):
            sample_pairs(np.ones((5, 2)), None, 1, "uniform", rng)

    def test_gradient_weighted_needs_targets(self, rng):
        with pytest.raises(SamplingError):
            sample_pairs(np.eye(3), None, 1, "gradient_weighted", rng)

    def test_width_exceeds_available_pairs(self, rng):
        with pytest.raises(SamplingError):
            sample_pairs(np.array([[0.0], [1.0], [2.0]]), None, 4, "uniform", rng)

    def test_constant_targets_fall_back_to_uniform(self, rng, caplog):
        data = rng.standard_normal((10, 2))
        pairs = sample_pairs(data, np.zeros((10, 1)), 5, "gradient_weighted", rng)
        assert pairs.shape == (5, 2)
        assert "uniform" in caplog.text

    def test_large_data_uses_candidate_pool(self, rng):
        data = rng.standard_normal((2000, 2))
        pairs = sample_pairs(data, None, 5, "uniform", rng)
        assert pairs.shape == (5, 2)
        assert np.all(pairs[:, 0] < pairs[:, 1])
        assert np.all(pairs < 2000)

    def test_candidate_pool_has_no_repeated_pairs(self):
        i, j = _candidate_pool(1100, 300, np.random.default_rng(3))
        assert np.all(i < j)
        assert len(set(zip(i.tolist(), j.tolist()))) == i.size

    @pytest.mark.parametrize("seed", range(5))
    def test_large_data_pairs_are_distinct(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((1100, 2))
        pairs = sample_pairs(data, None, 400, "uniform", rng)
        assert np.unique(pairs, axis=0).shape[0] == 400


class TestSampleLayer:
    def test_deterministic_for_fixed_seed(self):
        data = np.random.default_rng(0).standard_normal((50, 2))
        cfg = SamplingConfig(width=10)
        a = sample_layer(data, None, cfg, np.random.default_rng(3))
        b = sample_layer(data, None, cfg, np.random.default_rng(3))
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.biases, b.biases)

    def test_layer_streams_independent(self):
        first, second = layer_streams(5)
        assert first.random() != second.random()
        again, _ = layer_streams(5)
        np.testing.assert_array_equal(layer_streams(5)[0].random(3), again.random(3))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SamplingConfig(width=0)
        with pytest.raises(ValueError):
            SamplingConfig(width=3, density="normal")


class TestGaussianLayer:
    def test_statistics(self):
        layer = gaussian_layer(2, 1000, np.random.default_rng(1))
        assert abs(layer.weights.mean()) < 0.1
        assert abs(layer.weights.var() - 1.0) < 0.15
        assert np.all(np.abs(layer.biases) <= 1.0)
        assert not layer.has_provenance

    def test_deterministic(self):
        a = gaussian_layer(3, 20, np.random.default_rng(9))
        b = gaussian_layer(3, 20, np.random.default_rng(9))
        np.testing.assert_array_equal(a.weights, b.weights)


class TestPairsExport:
    def test_frame_columns(self, rng):
        layer = sample_layer(rng.standard_normal((12, 2)), None, SamplingConfig(width=4), rng)
        frame = pairs_frame(layer)
        assert list(frame.columns) == ["neuron_index", "i", "j", "h1_1", "h1_2", "h2_1", "h2_2"]
        assert len(frame) == 4

    def test_csv(self, rng, tmp_path):
        layer = sample_layer(rng.standard_normal((12, 2)), None, SamplingConfig(width=4), rng)
        path = tmp_path / "pairs.csv"
        export_pairs_csv(layer, path)
        frame = pd.read_csv(path, float_precision="round_trip")
        np.testing.assert_array_equal(frame[["h1_1", "h1_2"]].to_numpy(), layer.pair_points[:, 0])

    def test_gaussian_has_no_pairs(self, rng):
        with pytest.raises(SamplingError):
            pairs_frame(gaussian_layer(2, 3, rng))
