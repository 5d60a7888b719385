import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symloss.centroid import compute_centroid
from symloss.data import LabeledDataset, SyntheticSpec, gaussian_blobs
from symloss.losses import LossFunction, alpha_mae, cross_entropy, multiclass_unhinged, sgce
from symloss.model import (
    MlpModel,
    ScoreNorm,
    TrainConfig,
    TrainingAborted,
    backward,
    evaluate_accuracy,
    forward,
    get_norm_stats,
    init_mlp,
    learning_rate,
    train,
)
from symloss.numerics import InvalidArgumentError, make_rng
from symloss.verify import check_backward


def _blobs(per_class=100, seed=0, stream=0):
    return gaussian_blobs(SyntheticSpec(num_classes=3, per_class=per_class, seed=seed), stream)


class TestForward:
    def test_identity_layer(self):
        m = MlpModel((3, 3), [np.eye(3)], [np.zeros(3)], "identity")
        x = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(forward(m, x), x)

    def test_zero_weights_give_bias(self):
        m = MlpModel((2, 4, 3), [np.zeros((4, 2)), np.zeros((3, 4))], [np.ones(4), np.array([1.0, 2.0, 3.0])])
        assert np.array_equal(forward(m, np.array([5.0, -1.0])), [1.0, 2.0, 3.0])

    def test_relu_fixes_zero(self):
        m = init_mlp((4, 8, 3), seed=1)
        assert np.array_equal(forward(m, np.zeros(4)), np.zeros(3))

    def test_no_activation_after_last_layer(self):
        m = MlpModel((1, 1), [np.array([[-1.0]])], None, "relu")
        assert forward(m, np.array([2.0]))[0] == -2.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            forward(init_mlp((3, 2)), np.zeros(4))

    def test_bad_shapes_rejected(self):
        with pytest.raises(InvalidArgumentError):
            MlpModel((2, 3), [np.zeros((2, 3))])

    def test_glorot_limits_and_zero_bias(self):
        m = init_mlp((10, 30, 4), seed=2)
        assert np.abs(m.weights[0]).max() <= math.sqrt(6 / 40)
        assert all(np.all(b == 0) for b in m.biases)
        assert np.array_equal(init_mlp((10, 30, 4), seed=2).weights[1], m.weights[1])


class TestNormStats:
    def test_examples(self):
        m = MlpModel((2, 2), [2 * np.eye(2)], None, "identity")
        assert get_norm_stats(m) == (1, pytest.approx(2 * math.sqrt(2)))
        z = MlpModel((2, 3, 2), [np.zeros((3, 2)), np.zeros((2, 3))])
        assert get_norm_stats(z)[1] == 0.0

    def test_product(self):
        m = init_mlp((3, 5, 4, 2), seed=4)
        want = np.prod([np.linalg.norm(W) for W in m.weights])
        assert get_norm_stats(m) == (3, pytest.approx(want, rel=1e-15))


class TestBackward:
    def test_linear_unhinged_gradient_is_code_outer(self):
        C = 3
        m = MlpModel((2, C), [make_rng(0).standard_normal((C, 2))], None, "identity")
        x, y = np.array([0.7, -1.3]), 1
        _, (gW,) = backward(m, x, y, multiclass_unhinged(C))
        code = np.full(C, -1 / C)
        code[y] += 1
        assert np.allclose(gW, -np.outer(code, x), atol=1e-15)

    @pytest.mark.parametrize("kind", ["none", "euclidean", "batch_stats"])
    @pytest.mark.parametrize("loss", [cross_entropy(3), sgce(3, 0.65), alpha_mae(3, 2.0)], ids=lambda L: L.name)
    def test_matches_finite_differences(self, kind, loss):
        rng = make_rng(5)
        m = init_mlp((4, 6, 3), "tanh", seed=5)
        X, y = rng.standard_normal((8, 4)), rng.integers(0, 3, 8)
        r = check_backward(m, X, y, loss, kind)
        assert r.passed, r.to_text()

    def test_euclidean_single_probe(self):
        m = init_mlp((2, 5, 3), seed=9)
        r = check_backward(m, np.array([[0.3, -0.8]]), np.array([2]), cross_entropy(3), "euclidean")
        assert r.passed

    def test_wrong_gradient_detected(self):
        ce = cross_entropy(3)
        bad = LossFunction("bad", 3, lambda Z, y: 2 * ce.gradient_fn(Z, y), table_fn=ce.table_fn)
        m = init_mlp((2, 4, 3), "tanh", seed=1)
        assert not check_backward(m, np.ones((3, 2)), np.array([0, 1, 2]), bad).passed


class TestScoreNorm:
    def test_euclidean_bounds_output(self):
        U, _ = ScoreNorm("euclidean").forward(make_rng(1).standard_normal((50, 4)) * 100)
        assert np.all(np.linalg.norm(U, axis=1) <= 1 + 1e-12)

    def test_batch_stats_standardises(self):
        Z = make_rng(2).standard_normal((64, 3)) * 5 + 2
        U, _ = ScoreNorm("batch_stats").forward(Z, training=True)
        assert np.allclose(U.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(U.var(axis=0), 1, atol=1e-4)

    def test_batch_stats_running_estimates(self):
        norm = ScoreNorm("batch_stats")
        Z = np.array([[0.0, 2.0], [2.0, 4.0]])
        norm.forward(Z, training=True)
        assert np.allclose(norm.running_mean, [0.1, 0.3])
        # unbiased variance of each column is 2
        assert np.allclose(norm.running_var, [0.9 + 0.2, 0.9 + 0.2])

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgumentError):
            ScoreNorm("layer")


class TestAccuracy:
    def test_constant_scores_tie_to_class_zero(self):
        m = MlpModel((2, 3), [np.zeros((3, 2))], [np.zeros(3)])
        d = _blobs(per_class=20)
        assert evaluate_accuracy(m, d) == pytest.approx(np.mean(d.labels == 0))

    def test_separating_linear_model(self):
        X = np.array([[2.0, 0.1], [3.0, -0.5], [-2.0, 0.0], [-1.0, 1.0]])
        d = LabeledDataset(X, np.array([0, 0, 1, 1]), 2)
        m = MlpModel((2, 2), [np.array([[1.0, 0.0], [-1.0, 0.0]])], None, "identity")
        assert evaluate_accuracy(m, d) == 1.0

    def test_random_labels_near_half(self):
        N = 20_000
        rng = make_rng(3)
        d = LabeledDataset(rng.standard_normal((N, 2)), rng.integers(0, 2, N), 2)
        acc = evaluate_accuracy(init_mlp((2, 8, 2), seed=3), d)
        assert abs(acc - 0.5) < 4 * math.sqrt(0.25 / N)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-50, 50))
    def test_shift_invariance(self, c):
        d = _blobs(per_class=30)
        m = init_mlp((2, 8, 3), seed=6)
        shifted = m.copy()
        shifted.biases[-1] += c
        assert evaluate_accuracy(m, d) == evaluate_accuracy(shifted, d)


class TestSchedule:
    def test_cosine(self):
        cfg = TrainConfig(epochs=10, lr=0.1, eta_min=0.01)
        assert learning_rate(cfg, 0) == pytest.approx(0.1)
        assert learning_rate(cfg, 5) == pytest.approx(0.01 + 0.09 * 0.5)
        assert learning_rate(cfg, 10) == pytest.approx(0.01)

    def test_step(self):
        cfg = TrainConfig(lr=1.0, schedule="step", step_size=3, gamma=0.5)
        assert [learning_rate(cfg, t) for t in (0, 2, 3, 6)] == [1.0, 1.0, 0.5, 0.25]

    def test_constant(self):
        assert learning_rate(TrainConfig(lr=0.3, schedule="constant"), 99) == 0.3

    @pytest.mark.parametrize("bad", [dict(lr=0.0), dict(momentum=1.0), dict(weight_decay=-1.0),
                                     dict(grad_clip=0.0), dict(schedule="linear"), dict(score_norm="x")])
    def test_invalid(self, bad):
        with pytest.raises(InvalidArgumentError):
            TrainConfig(**bad)

    def test_auto_score_norm(self):
        assert TrainConfig(loss_name="ce").resolved_score_norm() == "none"
        assert TrainConfig(loss_name="sgce").resolved_score_norm() == "euclidean"
        assert TrainConfig(loss_name="sym_mse").resolved_score_norm() == "euclidean"


class TestTrain:
    def test_zero_epochs(self):
        d = _blobs(20)
        m = init_mlp((2, 4, 3), seed=0)
        before = [p.copy() for p in m.parameters()]
        rec = train(m, d, d, TrainConfig(epochs=0))
        assert rec.epochs == [] and rec.final_test_accuracy is None
        assert all(np.array_equal(a, b) for a, b in zip(before, m.parameters()))

    def test_one_full_batch_step_moves_by_centroid(self):
        d = _blobs(10)
        m = MlpModel((2, 3), [make_rng(1).standard_normal((3, 2))], None, "identity")
        W0 = m.weights[0].copy()
        cfg = TrainConfig(epochs=1, batch_size=len(d), lr=0.05, momentum=0.0, weight_decay=0.0,
                          grad_clip=math.inf, score_norm="none", loss_name="unhinged")
        train(m, d, d, cfg)
        assert np.allclose(m.weights[0] - W0, 0.05 * compute_centroid(d), atol=1e-15)

    def test_zero_learning_rate_epoch_leaves_parameters(self):
        # cosine with T_max = 1 makes the second epoch's rate exactly eta_min = 0
        d = _blobs(10)
        m = init_mlp((2, 4, 3), seed=2)
        cfg = TrainConfig(epochs=1, lr=0.1, T_max=1, batch_size=7)
        train(m, d, d, cfg)
        after_one = [p.copy() for p in m.parameters()]
        m2 = init_mlp((2, 4, 3), seed=2)
        rec = train(m2, d, d, TrainConfig(epochs=2, lr=0.1, T_max=1, batch_size=7))
        assert rec.epochs[1]["lr"] == 0.0
        assert all(np.array_equal(a, b) for a, b in zip(after_one, m2.parameters()))

    def test_clipped_norms_recorded(self):
        d = _blobs(50)
        cfg = TrainConfig(epochs=3, lr=0.5, grad_clip=0.05, batch_size=16)
        rec = train(init_mlp((2, 16, 3), seed=1), d, d, cfg)
        assert all(e["max_grad_norm"] <= 0.05 + 1e-9 for e in rec.epochs)

    def test_deterministic_record(self):
        d = _blobs(40)
        cfg = TrainConfig(epochs=3, batch_size=16, seed=7, loss_name="sgce", loss_params={"q": 0.65})
        a = train(init_mlp((2, 8, 3), seed=7), d, d, cfg).to_json()
        b = train(init_mlp((2, 8, 3), seed=7), d, d, cfg).to_json()
        assert a == b
        rec = json.loads(a)
        assert rec["config"]["score_norm"] == "euclidean"
        assert [e["epoch"] for e in rec["epochs"]] == [0, 1, 2]

    def test_clean_blobs_learned(self):
        d, t = _blobs(200), _blobs(200, stream=1)
        rec = train(init_mlp((2, 16, 3), seed=0), d, t, TrainConfig(epochs=15, batch_size=32, lr=0.05))
        assert rec.final_test_accuracy > 0.95
        assert all(0 <= e["test_accuracy"] <= 1 for e in rec.epochs)

    def test_nan_aborts_with_record(self):
        ce = cross_entropy(3)
        nan_loss = LossFunction("nan", 3, ce.gradient_fn, value_fn=lambda Z, y: np.full(len(Z), np.nan))
        d = _blobs(10)
        with pytest.raises(TrainingAborted) as info:
            train(init_mlp((2, 3), seed=0), d, d, TrainConfig(epochs=2), loss=nan_loss)
        assert info.value.record.aborted and info.value.record.epochs == []

    def test_euclidean_inputs_respect_remainder_bound(self):
        # with normalised scores ||z|| <= 1, so |R| <= beta / 2 for a beta-smooth loss
        from symloss.verify import estimate_beta
        loss = alpha_mae(3, 2.0)
        beta = estimate_beta(loss, probes=300, box_radius=1.0)
        d = _blobs(50)
        m = init_mlp((2, 8, 3), seed=3)
        train(m, d, d, TrainConfig(epochs=2, loss_name="alpha_mae", loss_params={"alpha": 2.0}))
        U, _ = ScoreNorm("euclidean").forward(forward(m, d.features))
        zero = np.zeros_like(U)
        R = loss.value(U, d.labels) - loss.value(zero, d.labels) - (loss.gradient(zero, d.labels) * U).sum(axis=1)
        assert np.all(np.abs(R) <= beta / 2 + 1e-9)

    def test_dimension_mismatch(self):
        d = _blobs(5)
        with pytest.raises(InvalidArgumentError):
            train(init_mlp((3, 3)), d, d, TrainConfig(epochs=1))
