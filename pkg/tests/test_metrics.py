import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucl.metrics import EvalReport, RocCurve, accuracy, auc, evaluate, roc_curve

HAND_SCORES = [0.9, 0.8, 0.4, 0.3]
HAND_LABELS = ["fake", "real", "fake", "real"]


def pairwise_auc(scores, labels):
    """Brute-force Mann-Whitney over every (fake, real) pair."""
    fakes = [s for s, y in zip(scores, labels) if y == 1]
    reals = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for f in fakes:
        for r in reals:
            total += 1.0 if f > r else 0.5 if f == r else 0.0
    return total / (len(fakes) * len(reals))


def random_score_sets(count=200, seed=0):
    r = np.random.default_rng(seed)
    for _ in range(count):
        n = int(r.integers(2, 201))
        y = r.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        # coarse grid so ties are frequent
        s = r.integers(0, int(r.integers(2, 30)), size=n) / 10.0
        yield s, y


def test_hand_example_auc_is_exactly_three_quarters():
    assert auc(HAND_SCORES, HAND_LABELS) == 0.75


def test_hand_example_roc_points():
    roc = roc_curve(HAND_SCORES, HAND_LABELS)
    assert roc.points() == [(0, 0), (0, 0.5), (0.5, 0.5), (0.5, 1), (1, 1)]
    assert roc.thresholds[0] == np.inf and roc.thresholds[-1] == -np.inf


def test_mann_whitney_equals_trapezoid_and_brute_force():
    worst = 0.0
    for s, y in random_score_sets():
        a = auc(s, y)
        worst = max(worst, abs(a - roc_curve(s, y).area()), abs(a - pairwise_auc(s, y)))
    assert worst < 1e-12


def test_perfect_separation_and_all_ties():
    assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert (0.0, 1.0) in roc_curve([0.9, 0.8, 0.1], [1, 1, 0]).points()
    assert auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    assert roc_curve([0.5] * 4, [0, 1, 0, 1]).points() == [(0, 0), (1, 1)]


def test_single_class_is_an_error():
    with pytest.raises(ValueError, match="both"):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError, match="both"):
        roc_curve([0.1, 0.2], ["real", "real"])


def test_accuracy_examples():
    assert accuracy([0.9, 0.1], ["fake", "real"]) == 1.0
    p = np.array([0.9, 0.2, 0.7, 0.4])
    y = np.array([1, 0, 0, 0])
    assert accuracy(p, 1 - y) == pytest.approx(1 - accuracy(p, y))
    with pytest.raises(ValueError, match="empty"):
        accuracy([], [])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=60))
def test_roc_monotone_with_ties(pairs):
    s = np.array([p[0] for p in pairs]) / 6.0
    y = np.array([int(p[1]) for p in pairs])
    if y.min() == y.max():
        return
    roc = roc_curve(s, y)
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)
    assert roc.points()[0] == (0, 0) and roc.points()[-1] == (1, 1)
    assert np.all(np.diff(roc.thresholds) < 0)
    assert len(roc.fpr) == len(np.unique(s)) + 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_auc_symmetry_and_monotone_invariance(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 60))
    y = r.integers(0, 2, size=n)
    y[:2] = [0, 1]
    s = r.permutation(n) / n  # tie-free
    a = auc(s, y)
    assert a + auc(1 - s, y) == pytest.approx(1.0, abs=1e-12)
    assert auc(np.exp(3 * s) - 7, y) == a


def test_roc_csv_round_trip_and_header():
    roc = roc_curve(HAND_SCORES, HAND_LABELS)
    text = roc.to_csv("abc")
    lines = text.splitlines()
    assert lines[0] == "# config_hash=abc" and lines[1] == "threshold,fpr,tpr"
    back = RocCurve.from_csv(text)
    assert back.points() == roc.points()
    np.testing.assert_array_equal(back.thresholds, roc.thresholds)


def test_evaluate_report():
    report, roc = evaluate(HAND_SCORES, HAND_LABELS, "A", "B", config_hash="h")
    d = json.loads(report.to_json())
    assert d["auc"] == 0.75 and d["n_real"] == 2 and d["n_fake"] == 2 and d["config_hash"] == "h"
    assert d["accuracy"] == 0.5
    assert roc.area() == 0.75
    with pytest.raises(ValueError):
        EvalReport("A", "B", 1.5, 0.0, 1, 1)
