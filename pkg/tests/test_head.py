import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from portsel.head import (
    MULTICLASS,
    MULTILABEL,
    LinearHead,
    ModelFormatError,
    Phase,
    TrainSchedule,
    activate,
    finite_difference_check,
    finite_difference_gradients,
    forward,
    gradients,
    init_head,
    load_head,
    loss_multiclass,
    loss_weighted_bce,
    predict,
    predict_many,
    save_head,
    train,
)


def plain_bce(p, y):
    return -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))


def random_case(rng, mode):
    n = int(rng.integers(2, 7))
    d = int(rng.integers(2, 12))
    head = LinearHead(rng.normal(size=(n, d)), rng.normal(size=n), mode)
    x = rng.normal(size=d)
    if mode == MULTILABEL:
        target = (rng.random(n) < 0.5).astype(np.float64)
    else:
        target = int(rng.integers(n))
    return head, x, target


class TestForward:
    def test_zero_head(self):
        head = LinearHead(np.zeros((3, 4)), np.zeros(3), MULTICLASS)
        assert forward(head, np.ones(4)).tolist() == [0.0, 0.0, 0.0]

    def test_basis_probe(self):
        W = np.eye(3, 5)
        head = LinearHead(W, np.zeros(3), MULTICLASS)
        for k in range(5):
            np.testing.assert_array_equal(forward(head, np.eye(5)[k]), W[:, k])

    def test_hand_product(self):
        W = np.array([[1.0, 2.0, 3.0, 4.0], [0.5, -1.0, 0.0, 2.0], [-2.0, 0.0, 1.0, 1.0]])
        b = np.array([0.1, 0.2, 0.3])
        x = np.array([1.0, -1.0, 2.0, 0.5])
        want = [1 - 2 + 6 + 2 + 0.1, 0.5 + 1 + 0 + 1 + 0.2, -2 + 0 + 2 + 0.5 + 0.3]
        np.testing.assert_allclose(forward(LinearHead(W, b, MULTICLASS), x), want, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_head(2, 8), np.ones(7))


class TestActivate:
    def test_uniform_softmax(self):
        assert activate(np.zeros(4), MULTICLASS).tolist() == [0.25] * 4

    def test_sigmoid_zero(self):
        assert activate(np.zeros(1), MULTILABEL).tolist() == [0.5]

    def test_softmax_no_overflow(self):
        p = activate(np.array([1000.0, 0.0]), MULTICLASS)
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0)

    def test_predict_many_matches_predict(self):
        rng = np.random.default_rng(0)
        for mode in (MULTICLASS, MULTILABEL):
            head, _, _ = random_case(rng, mode)
            X = rng.normal(size=(5, head.dim))
            np.testing.assert_allclose(predict_many(head, X), [predict(head, x) for x in X], atol=1e-14)


class TestLosses:
    def test_multiclass_perfect(self):
        assert loss_multiclass([1.0, 0.0, 0.0], 0) == pytest.approx(0.0, abs=1e-15)

    def test_multiclass_uniform(self):
        assert loss_multiclass([0.25] * 4, 2) == pytest.approx(math.log(4), abs=1e-12)
        assert round(loss_multiclass([0.25] * 4, 2), 4) == 1.3863

    def test_multiclass_clamped(self):
        value = loss_multiclass([0.0, 1.0], 0)
        assert math.isfinite(value)
        assert value == pytest.approx(-math.log(1e-12))

    def test_weighted_bce_hand_value(self):
        value = loss_weighted_bce([0.5, 0.5], [1, 0], recall_weight=2.0)
        assert value == pytest.approx(1.5 * math.log(2), abs=1e-12)
        assert abs(value - 1.0397) < 1e-3

    def test_weighted_bce_perfect(self):
        assert loss_weighted_bce([1.0, 0.0, 1.0], [1, 0, 1]) < 1e-10

    def test_weighted_bce_shape_mismatch(self):
        with pytest.raises(ValueError):
            loss_weighted_bce([0.5], [1, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0.001, 0.999), st.booleans()), min_size=1, max_size=12))
def test_weight_one_is_plain_bce(pairs):
    p = np.array([a for a, _ in pairs])
    y = np.array([float(b) for _, b in pairs])
    assert loss_weighted_bce(p, y, 1.0) == pytest.approx(plain_bce(p, y), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.01, 0.98), min_size=2, max_size=6),
    st.integers(0, 5),
    st.floats(0.001, 0.01),
    st.floats(1.0, 4.0),
)
def test_weighted_bce_monotone(probs, idx, step, w):
    idx %= len(probs)
    p = np.array(probs)
    q = p.copy()
    q[idx] += step
    for label in (0.0, 1.0):
        y = np.zeros(len(p))
        y[idx] = label
        before, after = loss_weighted_bce(p, y, w), loss_weighted_bce(q, y, w)
        if label:
            assert after <= before + 1e-15
        else:
            assert after >= before - 1e-15


class TestGradients:
    def test_multiclass_uniform_direction(self):
        head = LinearHead(np.zeros((2, 3)), np.zeros(2), MULTICLASS)
        _, db = gradients(head, np.ones(3), 0)
        np.testing.assert_allclose(db, [-0.5, 0.5])

    def test_multilabel_formula(self):
        head = LinearHead(np.zeros((3, 2)), np.zeros(3), MULTILABEL)
        _, db = gradients(head, np.zeros(2), np.array([1.0, 0.0, 1.0]), recall_weight=2.0)
        # s = 0.5: ((1 + (w-1) y) s - w y) / n
        np.testing.assert_allclose(db, [(2 * 0.5 - 2) / 3, 0.5 / 3, (2 * 0.5 - 2) / 3])

    def test_near_zero_at_perfect_fit(self):
        head = LinearHead(np.zeros((2, 1)), np.array([40.0, -40.0]), MULTILABEL)
        dW, db = gradients(head, np.ones(1), np.array([1.0, 0.0]))
        assert np.abs(db).max() < 1e-15 and np.abs(dW).max() < 1e-15

    def test_checker_detects_wrong_weighting(self):
        rng = np.random.default_rng(6)
        head, x, target = random_case(rng, MULTILABEL)
        target[0] = 1.0
        nW, nb = finite_difference_gradients(head, x, target, recall_weight=3.0)
        # the weight-1 gradient is the wrong answer for a weight-3 loss
        _, wrong = gradients(head, x, target, recall_weight=1.0)
        assert np.abs(wrong - nb).max() / np.abs(nb).max() > 1e-2

    @pytest.mark.parametrize("mode", [MULTICLASS, MULTILABEL])
    def test_finite_differences(self, mode):
        rng = np.random.default_rng(5)
        for _ in range(50):
            head, x, target = random_case(rng, mode)
            assert finite_difference_check(head, x, target, float(rng.uniform(1, 3))) < 1e-4


def toy_separable(rng, n=20, dim=4):
    X = rng.normal(size=(n, dim))
    y = (X @ np.array([1.0, -2.0, 0.5, 1.0]) > 0).astype(int)
    return [(x, int(t)) for x, t in zip(X, y)]


class TestTrain:
    def test_separable_toy_fits(self):
        data = toy_separable(np.random.default_rng(2))
        sched = TrainSchedule((Phase(10, 1.0),), seed=0)
        result = train(data, init_head(2, 4, MULTICLASS, seed=0), sched)
        assert result.trace[-1].train_accuracy == 1.0
        assert len(result.trace) == 10

    def test_zero_learning_rate(self):
        data = toy_separable(np.random.default_rng(2))
        head0 = init_head(2, 4, MULTICLASS, seed=1)
        result = train(data, head0, TrainSchedule((Phase(3, 0.0),)))
        assert result.head == head0
        assert len({r.train_loss for r in result.trace}) == 1

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(30, 6))
        data = [(x, (rng.random(3) < 0.5).astype(float)) for x in X]
        sched = TrainSchedule.parse("2:0.5:2,2:0.5", seed=9)
        a = train(data, init_head(3, 6, MULTILABEL, 0), sched).head
        b = train(data, init_head(3, 6, MULTILABEL, 0), sched).head
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)

    def test_head_init_untouched(self):
        data = toy_separable(np.random.default_rng(2))
        head0 = init_head(2, 4, MULTICLASS, seed=1)
        snapshot = head0.copy()
        train(data, head0, TrainSchedule((Phase(2, 0.5),)))
        assert head0 == snapshot

    def test_minibatch_of_one_matches_sgd(self):
        data = toy_separable(np.random.default_rng(3))
        head0 = init_head(2, 4, MULTICLASS, seed=1)
        a = train(data, head0, TrainSchedule((Phase(2, 0.3),), seed=1)).head
        # batch_size equal to 1 takes the kernel path; compare against the generic loop
        from portsel import head as nh

        b = head0.copy()
        rng = np.random.default_rng(1)
        X = np.stack([x for x, _ in data])
        T = np.array([t for _, t in data])
        for _ in range(2):
            nh._minibatch_epoch(b, X, T, rng.permutation(len(X)), Phase(1, 0.3), 1)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)

    def test_minibatch_learns(self):
        data = toy_separable(np.random.default_rng(2))
        result = train(data, init_head(2, 4, MULTICLASS, 0), TrainSchedule((Phase(30, 2.0),), batch_size=4))
        assert result.trace[-1].train_accuracy >= 0.9

    def test_validation_recorded(self):
        data = toy_separable(np.random.default_rng(2))
        result = train(data[:15], init_head(2, 4, MULTICLASS, 0), TrainSchedule((Phase(1, 0.1),)), validation=data[15:])
        assert math.isfinite(result.trace[0].val_loss)

    def test_phase_boundaries(self):
        sched = TrainSchedule.default(MULTILABEL)
        got = [(e, p.learning_rate, p.recall_weight) for e, p in sched.epochs()]
        assert got[0] == (1, 1e-4, 2.0) and got[2] == (3, 1e-4, 2.0)
        assert got[3] == (4, 1e-4, 1.0) and got[6] == (7, 1e-5, 1.0)
        assert sched.total_epochs == 10

    def test_schedule_round_trip(self):
        s = TrainSchedule.parse("3:1e-4:2,3:1e-4,4:1e-5")
        assert TrainSchedule.parse(s.format()) == s
        with pytest.raises(ValueError):
            TrainSchedule.parse("3")


class TestModelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        head = LinearHead(rng.normal(size=(3, 5)) * 1e-7, rng.normal(size=3), MULTILABEL)
        save_head(head, tmp_path / "m.pslh")
        assert load_head(tmp_path / "m.pslh") == head

    @pytest.mark.parametrize(
        "content, where",
        [
            ("nope\n", ":1:"),
            ("PSLH v1\nmulticlass 2\n", ":2:"),
            ("PSLH v1\nmulticlass 2 1\n1 2\n", ":4:"),
            ("PSLH v1\nmulticlass 2 1\n1 2\n1 x\n", ":4:"),
            ("PSLH v1\nmulticlass 2 1\n1 2 3\n1 2\n", ":3:"),
            ("PSLH v1\nmulticlass 2 1\n1 2\n1 nan\n", ":4:"),
            ("PSLH v1\nmulticlass 1 1\n1 2\nextra\n", ":4:"),
        ],
    )
    def test_malformed_names_line(self, tmp_path, content, where):
        p = tmp_path / "bad.pslh"
        p.write_text(content)
        with pytest.raises(ModelFormatError, match=where):
            load_head(p)


def test_init_head_range():
    head = init_head(12, 768, seed=3)
    assert np.abs(head.weights).max() <= 1 / math.sqrt(768)
    assert not head.bias.any()
    assert init_head(12, 768, seed=3) == head
