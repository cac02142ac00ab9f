"""Classifier tests: MLP parameter arithmetic and training behavior,
SVM subgradient training against a derivative-free optimizer oracle."""

import dataclasses

import numpy as np
import pytest
from scipy.optimize import minimize

from gaitxfer.classify import (
    MLP_WIDTHS,
    MlpModel,
    SvmModel,
    build_mlp,
    mlp_from_archive,
    mlp_to_archive,
    predict,
    predict_mlp_proba,
    svm_from_archive,
    svm_objective,
    svm_to_archive,
    train_linear_svm,
    train_mlp,
)
from gaitxfer.dataio import load_model, save_model


def mlp_param_oracle(input_dim, n_classes):
    dims = (input_dim, *MLP_WIDTHS, n_classes)
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def make_blobs(n_per_class, rng, gap=4.0, dim=2):
    a = rng.normal(0.0, 0.5, size=(n_per_class, dim))
    b = rng.normal(0.0, 0.5, size=(n_per_class, dim))
    a[:, 0] -= gap / 2
    b[:, 0] += gap / 2
    x = np.vstack([a, b])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return x, y


class TestMlpConstruction:
    def test_param_count_for_gap_vector_input(self):
        model = build_mlp(192, 2)
        assert mlp_param_oracle(192, 2) == 45570
        assert model.param_count == 45570

    def test_param_count_for_stat_vector_input(self):
        model = build_mlp(19, 2)
        assert mlp_param_oracle(19, 2) == 34498
        assert model.param_count == 34498

    def test_param_count_matches_oracle_on_other_dims(self):
        for dim, k in ((48000, 2), (100, 3), (1, 2)):
            assert build_mlp(dim, k).param_count == mlp_param_oracle(dim, k)

    def test_widths_are_frozen(self):
        assert MLP_WIDTHS == (64, 128, 128, 64)
        model = build_mlp(10, 2)
        dims = [layer.weight.data.shape for layer in model.layers]
        assert dims == [(10, 64), (64, 128), (128, 128), (128, 64), (64, 2)]

    def test_same_seed_same_weights(self):
        a = build_mlp(20, 2, seed=5)
        b = build_mlp(20, 2, seed=5)
        for (_, ta), (_, tb) in zip(a.params.items(), b.params.items()):
            assert np.array_equal(ta.data, tb.data)
        c = build_mlp(20, 2, seed=6)
        assert not all(
            np.array_equal(ta.data, tc.data)
            for (_, ta), (_, tc) in zip(a.params.items(), c.params.items())
        )

    def test_invalid_sizes_rejected(self):
        with pytest.raises(ValueError):
            build_mlp(0, 2)
        with pytest.raises(ValueError):
            build_mlp(10, 1)


class TestMlpPredictions:
    def test_probabilities_are_normalized(self):
        model = build_mlp(7, 3)
        x = np.random.default_rng(0).standard_normal((11, 7))
        proba = predict_mlp_proba(model, x)
        assert proba.shape == (11, 3)
        assert (proba >= 0).all()
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-6)

    def test_single_vector_matches_batch(self):
        model = build_mlp(5, 2)
        x = np.random.default_rng(1).standard_normal((4, 5))
        batch = predict(model, x)
        singles = [predict(model, row) for row in x]
        assert list(batch) == singles
        assert isinstance(singles[0], int)

    def test_inference_is_deterministic(self):
        model = build_mlp(6, 2)
        x = np.random.default_rng(2).standard_normal((3, 6))
        assert np.array_equal(predict_mlp_proba(model, x), predict_mlp_proba(model, x))

    def test_dim_mismatch_rejected(self):
        model = build_mlp(6, 2)
        with pytest.raises(ValueError, match="dim"):
            predict(model, np.zeros((2, 7)))


class TestMlpTraining:
    def test_separable_blobs_reach_full_train_accuracy(self):
        x, y = make_blobs(40, np.random.default_rng(3))
        model = build_mlp(2, 2, seed=0)
        train_mlp(model, x, y, epochs=200, seed=0)
        assert (predict(model, x) == y).mean() == 1.0

    def test_loss_history_grows_and_decreases(self):
        x, y = make_blobs(30, np.random.default_rng(4))
        model = build_mlp(2, 2, seed=0)
        train_mlp(model, x, y, epochs=30, seed=0)
        assert 0 < len(model.loss_history) <= 30
        assert model.loss_history[-1] < model.loss_history[0]

    def test_single_class_labels_learned(self):
        x = np.random.default_rng(5).standard_normal((20, 3))
        y = np.ones(20, dtype=int)
        model = build_mlp(3, 2, seed=0)
        train_mlp(model, x, y, epochs=30, seed=0)
        assert (predict(model, x) == 1).all()

    def test_training_is_seed_deterministic(self):
        x, y = make_blobs(20, np.random.default_rng(6))
        histories = []
        for _ in range(2):
            model = build_mlp(2, 2, seed=9)
            train_mlp(model, x, y, epochs=10, seed=9)
            histories.append(list(model.loss_history))
        assert histories[0] == histories[1]

    def test_l2_strength_changes_trajectory(self):
        x, y = make_blobs(20, np.random.default_rng(7))
        plain = build_mlp(2, 2, seed=1, l2_strength=0.0)
        train_mlp(plain, x, y, epochs=5, seed=1)
        decayed = build_mlp(2, 2, seed=1, l2_strength=1e-2)
        train_mlp(decayed, x, y, epochs=5, seed=1)
        assert plain.loss_history != decayed.loss_history

    def test_zero_l2_runs_are_identical(self):
        x, y = make_blobs(20, np.random.default_rng(8))
        runs = []
        for _ in range(2):
            model = build_mlp(2, 2, seed=2, l2_strength=0.0)
            train_mlp(model, x, y, epochs=5, seed=2)
            runs.append(list(model.loss_history))
        assert runs[0] == runs[1]

    def test_early_stop_on_flat_loss(self):
        x = np.ones((4, 2))
        y = np.array([0, 1, 0, 1])
        model = build_mlp(2, 2, seed=0, dropout_rate=0.0)
        train_mlp(model, x, y, learning_rate=0.0, epochs=300, patience=3, seed=0)
        assert len(model.loss_history) == 4  # one best epoch plus patience stale ones

    def test_bad_labels_rejected(self):
        model = build_mlp(2, 2)
        x = np.zeros((3, 2))
        with pytest.raises(ValueError, match="labels"):
            train_mlp(model, x, np.array([0, 1, 2]))
        with pytest.raises(ValueError, match="length"):
            train_mlp(model, x, np.array([0, 1]))
        with pytest.raises(ValueError, match="dim"):
            train_mlp(model, np.zeros((3, 5)), np.array([0, 1, 0]))

    def test_divergent_learning_rate_aborts(self):
        x, y = make_blobs(10, np.random.default_rng(9))
        model = build_mlp(2, 2, seed=0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RuntimeError, match="diverged"):
                train_mlp(model, x, y, learning_rate=1e18, epochs=50, seed=0)


class TestMlpArchive:
    def test_roundtrip_restores_predictions(self, tmp_path):
        x, y = make_blobs(15, np.random.default_rng(10))
        model = build_mlp(2, 2, seed=4)
        train_mlp(model, x, y, epochs=5, seed=4, fingerprint="fp-77")
        path = tmp_path / "clf.gxar"
        save_model(mlp_to_archive(model), path)
        restored = mlp_from_archive(load_model(path))
        assert isinstance(restored, MlpModel)
        assert np.array_equal(predict_mlp_proba(restored, x), predict_mlp_proba(model, x))
        assert restored.loss_history == model.loss_history
        assert restored.trained_on == "fp-77"
        assert restored.input_dim == 2 and restored.n_classes == 2

    def test_wrong_kind_rejected(self):
        archive = mlp_to_archive(build_mlp(2, 2))
        wrong = dataclasses.replace(archive, kind="svm")
        with pytest.raises(ValueError, match="mlp"):
            mlp_from_archive(wrong)


def svm_objective_raw(w, b, x, sign, lam):
    margins = sign * (x @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.maximum(0.0, 1.0 - margins).mean())


class TestSvmTraining:
    def test_separable_one_dimensional_data(self):
        x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0, 0, 1, 1])
        model = train_linear_svm(x, y, epochs=300)
        assert model.weight[0] > 0
        assert np.array_equal(predict(model, x), y)

    def test_mirrored_data_has_zero_bias(self):
        x = np.array([[-3.0, 1.0], [-1.0, -2.0], [3.0, -1.0], [1.0, 2.0]])
        y = np.array([0, 0, 1, 1])
        model = train_linear_svm(x, y, epochs=500)
        assert abs(model.bias) <= 1e-6

    def test_feature_scaling_keeps_train_predictions(self):
        x, y = make_blobs(25, np.random.default_rng(11))
        base = train_linear_svm(x, y, epochs=400)
        scaled = train_linear_svm(10.0 * x, y, epochs=400)
        assert np.array_equal(predict(base, x), predict(scaled, 10.0 * x))

    def test_training_is_deterministic(self):
        x, y = make_blobs(20, np.random.default_rng(12))
        a = train_linear_svm(x, y)
        b = train_linear_svm(x, y)
        assert np.array_equal(a.weight, b.weight)
        assert a.bias == b.bias

    def test_objective_beats_zero_model(self):
        x, y = make_blobs(20, np.random.default_rng(13))
        model = train_linear_svm(x, y, epochs=300)
        zero = SvmModel(weight=np.zeros(2), bias=0.0, lam=model.lam)
        assert svm_objective(model, x, y) < svm_objective(zero, x, y) == 1.0

    def test_objective_near_derivative_free_optimum(self):
        x, y = make_blobs(15, np.random.default_rng(14))
        lam = 0.05
        model = train_linear_svm(x, y, lam=lam, epochs=2000)
        sign = np.where(y == 1, 1.0, -1.0)

        def packed(v):
            return svm_objective_raw(v[:2], v[2], x, sign, lam)

        best = min(
            minimize(packed, np.zeros(3), method="Nelder-Mead",
                     options={"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-12}).fun,
            minimize(packed, np.array([1.0, 0.0, 0.0]), method="Nelder-Mead",
                     options={"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-12}).fun,
        )
        ours = svm_objective(model, x, y)
        assert ours <= best + 5e-3

    def test_single_class_rejected(self):
        x = np.zeros((4, 2))
        with pytest.raises(ValueError, match="2 classes"):
            train_linear_svm(x, np.zeros(4))

    def test_nonpositive_lam_rejected(self):
        x = np.array([[-1.0], [1.0]])
        y = np.array([0, 1])
        with pytest.raises(ValueError, match="lam"):
            train_linear_svm(x, y, lam=0.0)


class TestSvmPredict:
    def test_hand_rule(self):
        model = SvmModel(weight=np.array([1.0, 0.0]), bias=0.0, lam=1e-3)
        assert predict(model, np.array([3.0, -7.0])) == 1
        assert predict(model, np.array([-3.0, 7.0])) == 0
        assert predict(model, np.array([0.0, 0.0])) == 1  # boundary goes positive

    def test_batch_matches_single(self):
        model = SvmModel(weight=np.array([0.5, -2.0]), bias=0.3, lam=1e-3)
        x = np.random.default_rng(15).standard_normal((6, 2))
        batch = predict(model, x)
        assert list(batch) == [predict(model, row) for row in x]

    def test_dim_mismatch_rejected(self):
        model = SvmModel(weight=np.array([0.5, -2.0]), bias=0.3, lam=1e-3)
        with pytest.raises(ValueError, match="dim"):
            predict(model, np.zeros((2, 3)))


class TestSvmArchive:
    def test_roundtrip_is_exact(self, tmp_path):
        x, y = make_blobs(10, np.random.default_rng(16))
        model = train_linear_svm(x, y, fingerprint="fp-svm")
        path = tmp_path / "svm.gxar"
        save_model(svm_to_archive(model), path)
        restored = svm_from_archive(load_model(path))
        assert np.array_equal(restored.weight, model.weight)
        assert restored.bias == model.bias
        assert restored.lam == model.lam
        assert restored.trained_on == "fp-svm"

    def test_wrong_kind_rejected(self):
        model = SvmModel(weight=np.zeros(2), bias=0.0, lam=1e-3)
        wrong = dataclasses.replace(svm_to_archive(model), kind="mlp")
        with pytest.raises(ValueError, match="svm"):
            svm_from_archive(wrong)
