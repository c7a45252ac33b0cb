"""
采样RNN拟合、预测和模型文件测试
"""

import numpy as np
import pytest

from sampledrnn.core.errors import DegenerateDataError, DimensionError, ModelFormatError
from sampledrnn.core.koopman_rnn import (
    FitOptions, SampledRNN, edmd_matrices, fit_controlled, fit_direct, fit_uncontrolled,
    koopman_eigenvalues, load, model_from_dict, model_to_dict, predict, predict_batch, save, step,
)
from sampledrnn.core.sampling import SamplingConfig, apply_layer, identity_layer

EXACT = FitOptions(rcond=0.0)


def _linear_model(A):
    """用恒等字典在线性数据上拟合，得到 K = A, C = I"""
    rng = np.random.default_rng(0)
    d = A.shape[0]
    H = rng.standard_normal((d, 20))
    return fit_uncontrolled(H, A @ H, opts=EXACT, state_layer=identity_layer(d))


class TestFitUncontrolled:
    def test_identity_dictionary_doubling(self):
        H = np.eye(2)
        model = fit_uncontrolled(H, 2.0 * H, opts=EXACT, state_layer=identity_layer(2))
        np.testing.assert_allclose(model.K, 2.0 * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(model.C, np.eye(2), atol=1e-12)

    def test_recovers_linear_map(self, rng):
        A = 0.5 * rng.standard_normal((3, 3))
        model = _linear_model(A)
        np.testing.assert_allclose(model.K, A, atol=1e-8)
        np.testing.assert_allclose(model.C, np.eye(3), atol=1e-8)

    def test_matches_normal_equations(self, rng):
        H = rng.uniform(-1.0, 1.0, size=(2, 32))
        H_next = rng.uniform(-1.0, 1.0, size=(2, 32))
        model = fit_uncontrolled(H, H_next, layer_cfg=SamplingConfig(width=6), opts=EXACT, seed=1)
        F = apply_layer(model.state_dict, H.T).T
        F_next = apply_layer(model.state_dict, H_next.T).T
        gram = F @ F.T
        assert np.linalg.cond(gram) < 1e8
        np.testing.assert_allclose(model.K, F_next @ F.T @ np.linalg.inv(gram), atol=1e-6)
        np.testing.assert_allclose(model.C, H @ F.T @ np.linalg.inv(gram), atol=1e-6)

    def test_deterministic(self, small_vdp_dataset):
        snaps = small_vdp_dataset.snapshots()
        cfg = SamplingConfig(width=20)
        a = fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=cfg, seed=3)
        b = fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=cfg, seed=3)
        np.testing.assert_array_equal(a.K, b.K)
        np.testing.assert_array_equal(a.C, b.C)
        np.testing.assert_array_equal(a.state_dict.weights, b.state_dict.weights)

    def test_arrays_read_only(self):
        model = _linear_model(np.eye(2))
        with pytest.raises(ValueError):
            model.K[0, 0] = 5.0

    def test_all_snapshots_identical(self):
        H = np.ones((2, 10))
        with pytest.raises(DegenerateDataError):
            fit_uncontrolled(H, H, layer_cfg=SamplingConfig(width=3))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            fit_uncontrolled(np.ones((2, 5)), np.ones((2, 4)), state_layer=identity_layer(2))

    def test_outputs_from_states(self, rng):
        H = rng.standard_normal((2, 15))
        model = fit_uncontrolled(H, 0.9 * H, Y=2.0 * H, opts=EXACT, state_layer=identity_layer(2))
        np.testing.assert_allclose(model.V, 2.0 * np.eye(2), atol=1e-10)
        result = predict(model, [1.0, -1.0], 3)
        np.testing.assert_allclose(result.outputs, 2.0 * result.states, atol=1e-10)

    def test_bias_in_regression(self, rng):
        H = rng.standard_normal((1, 30))
        model = fit_uncontrolled(H, 0.5 * H + 1.0, opts=FitOptions(bias_in_regression=True),
                                 state_layer=identity_layer(1))
        assert model.lifted_dim == 2
        h_next, _ = step(model, np.array([2.0]))
        np.testing.assert_allclose(h_next, [2.0], atol=1e-10)

    def test_gaussian_sampling(self, small_vdp_dataset):
        snaps = small_vdp_dataset.snapshots()
        model = fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=SamplingConfig(width=16),
                                 sampling="gaussian")
        assert not model.state_dict.has_provenance
        assert model.fit_meta["sampling"] == "gaussian"

    def test_unknown_sampling(self, small_vdp_dataset):
        snaps = small_vdp_dataset.snapshots()
        with pytest.raises(ValueError):
            fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=SamplingConfig(width=4), sampling="sobol")


class TestConjugation:
    def test_invertible_change_of_basis(self, rng):
        H = rng.uniform(-2.0, 2.0, size=(2, 40))
        H_next = np.vstack([H[1], -0.8 * H[0] + 0.1 * H[1] ** 2])
        layer = fit_uncontrolled(H, H_next, layer_cfg=SamplingConfig(width=6), seed=2).state_dict
        F = apply_layer(layer, H.T).T
        F_next = apply_layer(layer, H_next.T).T
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        V = Q @ np.diag(np.linspace(1.0, 2.0, 6))
        K1, C1 = edmd_matrices(F, F_next, H, EXACT)
        K2, C2 = edmd_matrices(V @ F, V @ F_next, H, EXACT)
        np.testing.assert_allclose(K2, V @ K1 @ np.linalg.inv(V), rtol=1e-6, atol=1e-6)
        x = rng.uniform(-2.0, 2.0, size=(2, 5))
        Fx = apply_layer(layer, x.T).T
        for t in range(6):
            lhs = C1 @ np.linalg.matrix_power(K1, t) @ Fx
            rhs = C2 @ np.linalg.matrix_power(K2, t) @ (V @ Fx)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-6, atol=1e-6)


class TestFitControlled:
    def test_recovers_linear_input_map(self, rng):
        A = np.array([[0.9, 0.1], [-0.2, 0.8]])
        B0 = np.array([[0.0], [0.5]])
        H = rng.standard_normal((2, 30))
        X = rng.standard_normal((1, 30))
        model = fit_controlled(H, A @ H + B0 @ X, X, opts=EXACT, state_layer=identity_layer(2))
        np.testing.assert_allclose(model.K, A, atol=1e-8)
        np.testing.assert_allclose(model.B, B0, atol=1e-8)
        assert model.input_dict.is_identity

    def test_zero_inputs_match_uncontrolled(self, rng):
        A = np.array([[0.9, 0.1], [-0.2, 0.8]])
        H = rng.standard_normal((2, 30))
        opts = FitOptions(rcond=1e-10)
        controlled = fit_controlled(H, A @ H, np.zeros((1, 30)), opts=opts, state_layer=identity_layer(2))
        free = fit_uncontrolled(H, A @ H, opts=opts, state_layer=identity_layer(2))
        np.testing.assert_allclose(controlled.K, free.K, atol=1e-10)
        np.testing.assert_allclose(controlled.B, 0.0, atol=1e-10)

    def test_empty_input_delegates(self, small_vdp_dataset):
        snaps = small_vdp_dataset.snapshots()
        cfg = SamplingConfig(width=12)
        controlled = fit_controlled(snaps.H, snaps.H_next, np.zeros((0, snaps.H.shape[1])),
                                    state_cfg=cfg, seed=3)
        free = fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=cfg, seed=3)
        assert not controlled.is_controlled
        np.testing.assert_array_equal(controlled.K, free.K)

    def test_zero_input_step_equals_uncontrolled(self, rng):
        A = np.array([[0.9, 0.1], [-0.2, 0.8]])
        H = rng.standard_normal((2, 30))
        X = rng.standard_normal((1, 30))
        model = fit_controlled(H, A @ H + X, X, opts=EXACT, state_layer=identity_layer(2))
        free = SampledRNN(state_dict=model.state_dict, C=model.C, K=model.K)
        h = np.array([0.3, -0.7])
        np.testing.assert_allclose(step(model, h, [0.0])[0], step(free, h)[0], atol=1e-12)
        np.testing.assert_allclose(step(model, h)[0], step(free, h)[0], atol=1e-12)

    def test_sampled_input_dictionary(self, rng):
        H = rng.standard_normal((2, 50))
        X = rng.uniform(-1.0, 1.0, size=(1, 50))
        model = fit_controlled(H, 0.5 * H + X, X, state_cfg=SamplingConfig(width=10),
                               input_cfg=SamplingConfig(width=4), seed=0)
        assert model.B.shape == (10, 4)
        assert model.input_dim == 1

    def test_input_column_mismatch(self, rng):
        H = rng.standard_normal((2, 10))
        with pytest.raises(DimensionError):
            fit_controlled(H, H, np.ones((1, 9)), state_layer=identity_layer(2))


class TestFitDirect:
    def test_linear_map(self, rng):
        A = np.array([[0.9, 0.1], [-0.2, 0.8]])
        H = rng.standard_normal((2, 20))
        model = fit_direct(H, A @ H, opts=EXACT, state_layer=identity_layer(2))
        assert model.mode == "direct"
        assert model.K is None
        np.testing.assert_allclose(model.C, A, atol=1e-8)
        np.testing.assert_allclose(predict(model, [1.0, 0.0], 2).states[-1], A @ A @ [1.0, 0.0], atol=1e-8)

    def test_direct_with_inputs(self, rng):
        H = rng.standard_normal((2, 20))
        X = rng.standard_normal((1, 20))
        B0 = np.array([[1.0], [-1.0]])
        model = fit_direct(H, 0.5 * H + B0 @ X, X, opts=EXACT, state_layer=identity_layer(2))
        np.testing.assert_allclose(model.B, B0, atol=1e-8)
        with pytest.raises(ValueError):
            koopman_eigenvalues(model)


class TestPredict:
    def test_linear_rollout(self, rng):
        A = np.array([[0.5, 0.2], [0.0, 0.9]])
        model = _linear_model(A)
        h0 = np.array([1.0, -1.0])
        result = predict(model, h0, 3)
        expected = [A @ h0, A @ A @ h0, A @ A @ A @ h0]
        np.testing.assert_allclose(result.states, expected, atol=1e-8)
        assert not result.truncated

    def test_fixed_point(self):
        model = _linear_model(np.eye(2))
        result = predict(model, [0.4, 0.7], 10)
        np.testing.assert_allclose(result.states, np.tile([0.4, 0.7], (10, 1)), atol=1e-10)

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            predict(_linear_model(np.eye(1)), [1.0], 0)

    def test_divergence_truncates(self):
        model = SampledRNN(state_dict=identity_layer(1), C=np.eye(1), K=10.0 * np.eye(1))
        result = predict(model, [1.0], 1000)
        assert result.states.shape[0] < 1000
        assert np.all(np.isfinite(result.states))
        assert result.truncated
        assert result.message
        assert result.horizon == 1000
        assert result.valid_steps[0] == result.states.shape[0]

    def test_batch_marks_only_diverged(self):
        model = SampledRNN(state_dict=identity_layer(1), C=np.eye(1), K=10.0 * np.eye(1))
        result = predict_batch(model, [[1.0], [0.0]], 400)
        assert result.valid_steps[0] < 400
        assert result.valid_steps[1] == 400
        assert np.isnan(result.states[0, -1, 0])
        np.testing.assert_array_equal(result.states[1], 0.0)
        assert result.truncated

    def test_batch_without_divergence_not_truncated(self):
        result = predict_batch(_linear_model(0.5 * np.eye(2)), [[1.0, 1.0], [2.0, 0.0]], 50)
        assert not result.truncated
        assert result.horizon == 50

    def test_input_on_uncontrolled_model(self):
        with pytest.raises(DimensionError):
            step(_linear_model(np.eye(2)), np.zeros(2), [1.0])

    def test_wrong_state_shape(self):
        with pytest.raises(DimensionError):
            step(_linear_model(np.eye(2)), np.zeros(3))


class TestEigenvalues:
    def test_diagonal(self):
        values = koopman_eigenvalues(_linear_model(np.diag([0.5, -0.3])))
        np.testing.assert_allclose(values, [0.5, -0.3], atol=1e-8)

    def test_spectral_radius(self, rng):
        S = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
        A = S @ np.diag([0.9, 0.5, -0.2]) @ np.linalg.inv(S)
        values = koopman_eigenvalues(_linear_model(A))
        assert np.max(np.abs(values)) == pytest.approx(0.9, abs=1e-8)


class TestSerialization:
    def _model(self, small_vdp_dataset):
        snaps = small_vdp_dataset.snapshots()
        return fit_uncontrolled(snaps.H, snaps.H_next, Y=snaps.H, layer_cfg=SamplingConfig(width=16),
                                opts=FitOptions(rcond=1e-8), seed=5)

    def test_save_load_save_identical(self, small_vdp_dataset, tmp_path):
        model = self._model(small_vdp_dataset)
        first = save(model, tmp_path / "a.json")
        second = save(load(first), tmp_path / "b.json")
        assert first.read_bytes() == second.read_bytes()

    def test_loaded_model_predicts_identically(self, small_vdp_dataset, tmp_path):
        model = self._model(small_vdp_dataset)
        restored = load(save(model, tmp_path / "model.json"))
        np.testing.assert_array_equal(predict(restored, [1.0, 0.5], 50).states,
                                      predict(model, [1.0, 0.5], 50).states)
        np.testing.assert_array_equal(restored.state_dict.pair_indices, model.state_dict.pair_indices)

    def test_controlled_round_trip(self, rng):
        H = rng.standard_normal((2, 30))
        X = rng.standard_normal((1, 30))
        model = fit_controlled(H, 0.5 * H + X, X, state_cfg=SamplingConfig(width=8),
                               input_cfg=SamplingConfig(width=3), seed=1)
        restored = model_from_dict(model_to_dict(model))
        np.testing.assert_array_equal(restored.B, model.B)
        np.testing.assert_array_equal(restored.input_dict.weights, model.input_dict.weights)

    def test_truncated_file(self, small_vdp_dataset, tmp_path):
        path = save(self._model(small_vdp_dataset), tmp_path / "model.json")
        text = path.read_text(encoding="utf-8")
        path.write_text(text[: len(text) // 2], encoding="utf-8")
        with pytest.raises(ModelFormatError):
            load(path)

    def test_binary_file(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_bytes(bytes([0xff, 0xfe, 0x00, 0x9c]) * 64)
        with pytest.raises(ModelFormatError):
            load(path)

    def test_json_that_is_not_a_model(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("[1, 2, 3]", encoding="utf-8")
        with pytest.raises(ModelFormatError):
            load(path)

    def test_version_mismatch(self, small_vdp_dataset):
        data = model_to_dict(self._model(small_vdp_dataset))
        data["schema_version"] = 99
        with pytest.raises(ModelFormatError):
            model_from_dict(data)

    def test_wrong_format(self):
        with pytest.raises(ModelFormatError):
            model_from_dict({"format": "something-else"})

    def test_missing_field(self, small_vdp_dataset):
        data = model_to_dict(self._model(small_vdp_dataset))
        del data["C"]
        with pytest.raises(ModelFormatError):
            model_from_dict(data)


@pytest.mark.slow
class TestVanDerPolFit:
    def test_training_residual(self, vdp_dataset):
        snaps = vdp_dataset.snapshots()
        model = fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=SamplingConfig(width=80),
                                 opts=FitOptions(rcond=1e-8), seed=0)
        F = model.lift(snaps.H.T).T
        residual = np.sum((model.C @ model.K @ F - snaps.H_next) ** 2) / snaps.H.shape[1]
        assert residual <= 1e-5

    def test_eigenvalues_inside_unit_disc(self, vdp_dataset):
        snaps = vdp_dataset.snapshots()
        for seed in range(5):
            model = fit_uncontrolled(snaps.H, snaps.H_next, layer_cfg=SamplingConfig(width=80),
                                     opts=FitOptions(rcond=1e-8), seed=seed)
            assert np.max(np.abs(koopman_eigenvalues(model))) <= 1.0 + 1e-6
