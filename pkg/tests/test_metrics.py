import numpy as np
import pytest

from tabkit.data import make_dataset
from tabkit.metrics import (
    accuracy_score,
    average_precision,
    classification_report,
    confusion_matrix,
    f1_macro,
    learning_curve,
    pr_curve,
    roc_curve,
    roc_curves_ovr,
)
from tabkit.numkit import ShapeMismatchError
from utils import DataError


def _pairwise_auc(y, s):
    pos = s[y == 1]
    neg = s[y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def _hand_report(y, p, k):
    rows = []
    for c in range(k):
        tp = sum(1 for a, b in zip(y, p) if a == c and b == c)
        pred = sum(1 for b in p if b == c)
        sup = sum(1 for a in y if a == c)
        prec = tp / pred if pred else 0.0
        rec = tp / sup if sup else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows.append((prec, rec, f1, sup))
    return rows


def test_confusion_matrix_hand_tally():
    assert confusion_matrix([1, 0, 1, 1], [1, 0, 0, 1], 2).tolist() == [[1, 0], [1, 2]]


def test_confusion_matrix_perfect_and_conservation():
    y = [0, 2, 1, 2, 2]
    m = confusion_matrix(y, y, 3)
    assert np.array_equal(m, np.diag([1, 1, 3]))
    assert m.sum() == len(y)


def test_confusion_matrix_length_mismatch():
    with pytest.raises(ShapeMismatchError):
        confusion_matrix([0, 1], [0], 2)


def test_report_hand_example():
    report = classification_report([1, 0, 1, 1], [1, 0, 0, 1], ["0", "1"])
    class1 = report.per_class[1]
    assert class1["precision"] == 1.0
    assert class1["recall"] == pytest.approx(2 / 3)
    assert report.accuracy == 0.75


def test_report_perfect():
    report = classification_report([0, 1, 2], [0, 1, 2], ["a", "b", "c"])
    assert report.accuracy == 1.0
    assert all(r["precision"] == r["recall"] == r["f1"] == 1.0 for r in report.per_class)


def test_report_matches_hand_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 31))
        k = int(rng.integers(2, 6))
        y = rng.integers(0, k, n)
        p = rng.integers(0, k, n)
        report = classification_report(y, p, [str(c) for c in range(k)])
        for row, (prec, rec, f1, sup) in zip(report.per_class, _hand_report(y.tolist(), p.tolist(), k)):
            assert row["precision"] == pytest.approx(prec, abs=1e-12)
            assert row["recall"] == pytest.approx(rec, abs=1e-12)
            assert row["f1"] == pytest.approx(f1, abs=1e-12)
            assert row["support"] == sup
        assert report.accuracy == pytest.approx(np.trace(confusion_matrix(y, p, k)) / n)
        supports = np.array([r["support"] for r in report.per_class], dtype=float)
        recalls = np.array([r["recall"] for r in report.per_class])
        assert sum(supports) == report.total_support
        assert report.weighted_avg["recall"] == pytest.approx(np.dot(recalls, supports) / supports.sum(), abs=1e-9)
        # micro recall equals accuracy for single-label data
        assert report.weighted_avg["recall"] == pytest.approx(report.accuracy, abs=1e-9)


def test_zero_division_is_flagged():
    report = classification_report([0, 0], [0, 0], ["a", "b"])
    assert report.per_class[1]["precision"] == 0.0
    assert "b:precision" in report.zero_division
    assert "b:recall" in report.zero_division


def test_report_layout():
    report = classification_report([1, 0, 1, 1], [1, 0, 0, 1], ["no", "yes"])
    frame = report.to_frame()
    assert list(frame.columns) == ["", "Precision", "Recall", "F1-score", "Support"]
    assert frame[""].tolist() == ["no", "yes", "Accuracy", "macro avg", "weighted avg"]
    text = report.render_text()
    assert "Precision" in text and "weighted avg" in text and "0.75" in text


def test_accuracy_and_f1_macro():
    assert accuracy_score([0, 1, 1], [0, 1, 0]) == pytest.approx(2 / 3)
    assert f1_macro([0, 1], [0, 1]) == 1.0


def test_roc_perfect_and_inverted():
    y = np.array([0, 0, 1, 1])
    assert roc_curve(y, [0.1, 0.2, 0.8, 0.9]).auc == 1.0
    assert roc_curve(y, [0.9, 0.8, 0.2, 0.1]).auc == 0.0


def test_roc_endpoints():
    curve = roc_curve([0, 1, 0, 1, 1], [0.3, 0.6, 0.6, 0.1, 0.9])
    assert curve.points[0][:2] == (0.0, 0.0)
    assert curve.points[-1][:2] == (1.0, 1.0)


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(5)
    for _ in range(300):
        n = int(rng.integers(2, 31))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        s = rng.integers(0, 6, n).astype(float)  # many ties
        assert roc_curve(y, s).auc == pytest.approx(_pairwise_auc(y, s), abs=1e-12)


def test_roc_single_class():
    with pytest.raises(DataError):
        roc_curve([1, 1, 1], [0.1, 0.2, 0.3])


def test_pr_perfect_scores():
    curve = pr_curve([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])
    assert all(p == 1.0 for _, p, threshold in curve.points if threshold >= 0.8)
    assert curve.points[0][:2] == (1.0, 0.5)
    assert average_precision([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0


def test_pr_all_same_scores():
    curve = pr_curve([0, 1, 0, 1, 1], [0.5] * 5)
    assert len(curve.points) == 1
    recall, precision, _ = curve.points[0]
    assert recall == 1.0 and precision == pytest.approx(0.6)


def test_pr_matches_threshold_enumeration():
    y = np.array([1, 0, 1, 1, 0, 0, 1, 0, 1, 0])
    s = np.array([0.9, 0.8, 0.7, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1])
    curve = pr_curve(y, s)
    for recall, precision, threshold in curve.points:
        picked = s >= threshold
        assert precision == pytest.approx(y[picked].sum() / picked.sum())
        assert recall == pytest.approx(y[picked].sum() / y.sum())
    recalls = [r for r, _, _ in curve.points]
    assert recalls == sorted(recalls, reverse=True)


def test_roc_curves_ovr(three_class_ds):
    proba = np.eye(3)[three_class_ds.y]
    curves = roc_curves_ovr(three_class_ds.y, proba, three_class_ds.class_names)
    assert [c.label for c in curves] == ["a", "b", "c"]
    assert all(c.auc == 1.0 for c in curves)


def test_learning_curve_contract():
    X = np.arange(40, dtype=float).reshape(-1, 1)
    y = (np.arange(40) % 2).astype(np.int64)
    ds = make_dataset(X, y)
    train, valid = learning_curve("knn", {"k": 1}, ds, [8, 16, 32], cv_k=5, seed=0)
    assert [p[0] for p in train.points] == [8, 16, 32]
    assert all(p[1] == 1.0 for p in train.points)
    assert len(valid.points) == 3


def test_learning_curve_size_over_capacity(linear_ds):
    with pytest.raises(DataError, match="500"):
        learning_curve("logreg", {}, linear_ds, [500], cv_k=5)
