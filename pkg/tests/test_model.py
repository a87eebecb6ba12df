import math

import numpy as np
import pytest

from tawt_lab.model import (
    EmptyBatchError,
    Head,
    OptimizerState,
    SharedModel,
    apply_update,
    backward,
    forward,
    init_model,
    load_model,
    predictions,
    rep_gradient_flat,
    save_model,
    task_loss,
)
from tawt_lab.numerics import DimensionError, NumericError, Rng, finite_diff_gradient, hash64
from tawt_lab.taskgen import Dataset

from conftest import random_dataset


def tiny_model(d=3, hidden=4, k=3, seed=0, tasks=("target",)):
    return init_model(d, hidden, {t: k for t in tasks}, seed)


def identity_model(d):
    return SharedModel(np.eye(d), np.zeros(d), {"target": Head(np.eye(d), np.zeros(d))})


class TestForward:
    def test_identity_network_passes_nonnegative_input(self):
        m = identity_model(3)
        x = np.array([0.5, 1.0, 2.0])
        np.testing.assert_array_equal(forward(m, "target", x), x)

    def test_zero_parameters_give_zero_logits(self):
        m = tiny_model()
        m.W1[:] = 0.0
        m.heads["target"].W2[:] = 0.0
        np.testing.assert_array_equal(forward(m, "target", [1.0, -2.0, 3.0]), np.zeros(3))

    def test_hand_single_hidden_unit(self):
        m = SharedModel(
            np.array([[2.0]]), np.array([-1.0]),
            {"target": Head(np.array([[3.0]]), np.array([0.0]))},
        )
        assert forward(m, "target", [1.0])[0] == pytest.approx(3.0)
        # relu clamps: input 0 -> pre-activation -1 -> hidden 0 -> logit 0
        assert forward(m, "target", [0.0])[0] == 0.0

    def test_unknown_task(self):
        with pytest.raises(KeyError):
            forward(tiny_model(), "nope", [0.0, 0.0, 0.0])


class TestTaskLoss:
    def test_zero_model_uniform_softmax(self):
        for k in (3, 7):
            m = tiny_model(k=k)
            m.W1[:] = 0.0
            m.b1[:] = 0.0
            m.heads["target"].W2[:] = 0.0
            data = random_dataset(20, 3, k, seed=1)
            assert task_loss(m, "target", data) == pytest.approx(math.log(k), abs=1e-9)

    def test_saturated_correct_prediction(self):
        m = identity_model(2)
        data = Dataset(np.array([[40.0, 0.0]]), np.array([0]), 2, "target")
        assert task_loss(m, "target", data) < 1e-10

    def test_two_example_hand_case(self):
        m = identity_model(2)
        data = Dataset(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1, 1]), 2, "target")
        l1 = -math.log(math.exp(0.0) / (math.exp(1.0) + math.exp(0.0)) + 1e-12)
        l2 = -math.log(math.exp(2.0) / (math.exp(2.0) + math.exp(0.0)) + 1e-12)
        assert task_loss(m, "target", data) == pytest.approx((l1 + l2) / 2, rel=1e-12)

    def test_empty_raises(self):
        data = Dataset(np.empty((0, 3)), np.empty(0, dtype=np.int64), 3, "target")
        with pytest.raises(EmptyBatchError):
            task_loss(tiny_model(), "target", data)

    def test_permutation_invariance(self):
        m = tiny_model(seed=5)
        data = random_dataset(17, 3, 3, seed=2)
        perm = Rng(3).permutation(17)
        shuffled = Dataset(data.features[perm], data.labels[perm], 3, "target")
        assert task_loss(m, "target", data) == pytest.approx(
            task_loss(m, "target", shuffled), rel=1e-12
        )


def flat_params(model, task_id):
    return np.concatenate([model.rep_flat(), model.head_flat(task_id)])


def set_flat(model, task_id, vec):
    n_rep = model.rep_param_count()
    model.set_rep_flat(vec[:n_rep])
    model.set_head_flat(task_id, vec[n_rep:])


class TestBackward:
    def gradient_check(self, seed):
        rng = Rng(hash64(seed, "dims"))
        d = int(rng.integers(2, 6))
        hidden = int(rng.integers(2, 7))
        k = int(rng.integers(2, 5))
        n = int(rng.integers(1, 6))
        model = tiny_model(d, hidden, k, seed=hash64(seed, "model"))
        data = random_dataset(n, d, k, seed=hash64(seed, "data"))
        snap = backward(model, "target", data)
        analytic = np.concatenate([snap.rep_grad, snap.head_grad])

        probe = model.copy()

        def f(vec):
            set_flat(probe, "target", vec)
            return task_loss(probe, "target", data)

        fd = finite_diff_gradient(f, flat_params(model, "target"), h=1e-5)
        denom = np.maximum(np.abs(fd), 1e-8)
        return float(np.max(np.abs(analytic - fd) / denom))

    def test_matches_finite_differences(self):
        worst = max(self.gradient_check(seed) for seed in range(5))
        assert worst <= 1e-5

    def test_saturated_gradient_vanishes(self):
        m = identity_model(2)
        data = Dataset(np.array([[40.0, 0.0], [0.0, 35.0]]), np.array([0, 1]), 2, "target")
        snap = backward(m, "target", data)
        assert np.linalg.norm(snap.rep_grad) < 1e-8
        assert np.linalg.norm(snap.head_grad) < 1e-8

    def test_duplicating_batch_leaves_gradient_unchanged(self):
        m = tiny_model(seed=9)
        data = random_dataset(6, 3, 3, seed=11)
        doubled = Dataset(
            np.vstack([data.features, data.features]),
            np.concatenate([data.labels, data.labels]),
            3,
            "target",
        )
        a = backward(m, "target", data)
        b = backward(m, "target", doubled)
        np.testing.assert_allclose(a.rep_grad, b.rep_grad, atol=1e-14)
        np.testing.assert_allclose(a.head_grad, b.head_grad, atol=1e-14)

    def test_head_isolation(self):
        m = init_model(3, 4, {"target": 3, "other": 3}, seed=2)
        data = random_dataset(5, 3, 3, seed=4)
        before = m.head_flat("other").copy()
        snap = backward(m, "target", data)
        assert snap.task_id == "target"
        np.testing.assert_array_equal(m.head_flat("other"), before)

    def test_permutation_invariance(self):
        m = tiny_model(seed=13)
        data = random_dataset(12, 3, 3, seed=14)
        perm = Rng(15).permutation(12)
        shuffled = Dataset(data.features[perm], data.labels[perm], 3, "target")
        a = backward(m, "target", data)
        b = backward(m, "target", shuffled)
        np.testing.assert_allclose(a.rep_grad, b.rep_grad, atol=1e-12)
        np.testing.assert_allclose(a.head_grad, b.head_grad, atol=1e-12)


class TestRepGradientFlat:
    def test_full_subset_equals_backward_exactly(self):
        m = tiny_model(seed=1)
        data = random_dataset(10, 3, 3, seed=1)
        full = backward(m, "target", data).rep_grad
        got = rep_gradient_flat(m, "target", data, subset_size=10, rng=Rng(0))
        assert np.array_equal(full, got)
        got_bigger = rep_gradient_flat(m, "target", data, subset_size=99, rng=Rng(0))
        assert np.array_equal(full, got_bigger)

    def test_deterministic_subsets(self):
        m = tiny_model(seed=1)
        data = random_dataset(30, 3, 3, seed=1)
        a = rep_gradient_flat(m, "target", data, 8, Rng(7))
        b = rep_gradient_flat(m, "target", data, 8, Rng(7))
        assert np.array_equal(a, b)

    def test_bad_subset_size(self):
        m = tiny_model(seed=1)
        data = random_dataset(4, 3, 3, seed=1)
        with pytest.raises(ValueError):
            rep_gradient_flat(m, "target", data, 0, Rng(0))


class TestOptimizers:
    def test_sgd_zero_lr(self):
        p = [np.array([1.0, 2.0])]
        out = apply_update(p, [np.array([5.0, -5.0])], OptimizerState(kind="sgd", lr=0.0))
        np.testing.assert_array_equal(out[0], p[0])

    def test_sgd_hand_step(self):
        out = apply_update(
            [np.array([1.0])], [np.array([2.0])], OptimizerState(kind="sgd", lr=0.1)
        )
        assert out[0][0] == pytest.approx(0.8)

    def test_adam_first_step_size(self):
        state = OptimizerState(kind="adam", lr=3e-4)
        out = apply_update([np.array([1.0])], [np.array([1.0])], state)
        # bias correction makes m_hat/sqrt(v_hat) = 1 at step one
        assert out[0][0] == pytest.approx(1.0 - 3e-4, abs=1e-10)

    def test_adam_per_slot_step_counts(self):
        state = OptimizerState(kind="adam", lr=1e-2)
        apply_update([np.zeros(1)], [np.ones(1)], state, keys=["a"])
        apply_update([np.zeros(1)], [np.ones(1)], state, keys=["a"])
        apply_update([np.zeros(1)], [np.ones(1)], state, keys=["b"])
        assert state._t == {"a": 2, "b": 1}

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            apply_update([np.zeros(2)], [np.zeros(3)], OptimizerState(kind="sgd"))

    def test_nonfinite_update_raises(self):
        with pytest.raises(NumericError):
            apply_update(
                [np.array([1.0])], [np.array([np.inf])], OptimizerState(kind="sgd", lr=1.0)
            )

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            OptimizerState(kind="rmsprop")


class TestInitAndCheckpoints:
    def test_init_deterministic(self):
        a = init_model(4, 5, {"x": 3}, seed=11)
        b = init_model(4, 5, {"x": 3}, seed=11)
        assert np.array_equal(a.W1, b.W1)
        assert np.array_equal(a.heads["x"].W2, b.heads["x"].W2)

    def test_head_init_independent_of_other_heads(self):
        solo = init_model(4, 5, {"x": 3}, seed=11)
        both = init_model(4, 5, {"y": 2, "x": 3}, seed=11)
        assert np.array_equal(solo.heads["x"].W2, both.heads["x"].W2)
        assert np.array_equal(solo.W1, both.W1)

    def test_biases_zero_and_weights_bounded(self):
        m = init_model(6, 8, {"x": 4}, seed=3)
        assert np.all(m.b1 == 0.0) and np.all(m.heads["x"].b2 == 0.0)
        limit = math.sqrt(6.0 / (6 + 8))
        assert np.all(np.abs(m.W1) <= limit)

    def test_checkpoint_round_trip_bitwise(self, tmp_path):
        m = init_model(5, 7, {"alpha": 3, "beta": 4}, seed=21)
        path = tmp_path / "model.bin"
        save_model(m, path)
        loaded = load_model(path)
        assert np.array_equal(m.W1, loaded.W1)
        assert np.array_equal(m.b1, loaded.b1)
        assert list(loaded.heads) == ["alpha", "beta"]
        for tid in m.heads:
            assert np.array_equal(m.heads[tid].W2, loaded.heads[tid].W2)
            assert np.array_equal(m.heads[tid].b2, loaded.heads[tid].b2)

    def test_checkpoint_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_model(path)


def test_predictions_break_ties_to_lowest_index():
    m = tiny_model(k=3)
    m.W1[:] = 0.0
    m.b1[:] = 0.0
    m.heads["target"].W2[:] = 0.0
    m.heads["target"].b2[:] = 0.0
    preds = predictions(m, "target", np.zeros((4, 3)))
    assert np.all(preds == 0)
