import itertools
import time

import numpy as np
import pytest

from sbcboost import metrics
from sbcboost.errors import LabelOutOfRange, LengthMismatch
from sbcboost.metrics import (
    UNKNOWN,
    confusion,
    macro_f1,
    normalize_percent,
    per_class_report,
    summarize,
    timed,
)


def brute_force_report(y_true, y_pred, n):
    """Independent per-class TP/FP/FN counting (oracle)."""
    out = []
    for c in range(n):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append((precision, recall, f1))
    return out


class TestConfusion:
    def test_diagonal(self):
        cm = confusion([0, 1, 2], [0, 1, 2], 3)
        assert np.array_equal(cm.counts, np.eye(3, dtype=int))

    def test_hand_case(self):
        cm = confusion([0, 0, 1], [0, 1, 1], 2)
        assert cm.counts.tolist() == [[1, 1], [0, 1]]

    def test_unknown_column(self):
        cm = confusion([0, 1], [0, UNKNOWN], 2, has_unknown=True)
        assert cm.counts.shape == (2, 3)
        assert cm.counts[:, 2].sum() == 1

    def test_unknown_without_column_raises(self):
        with pytest.raises(LabelOutOfRange):
            confusion([0], [UNKNOWN], 2)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([0, 1], [0], 2)

    def test_totals_conserved(self):
        rng = np.random.default_rng(0)
        y_true = rng.integers(0, 4, 50)
        y_pred = rng.integers(0, 4, 50)
        cm = confusion(y_true, y_pred, 4)
        assert cm.total == 50


class TestReport:
    def test_hand_case(self):
        cm = confusion([0] * 5 + [1] * 5, [0] * 5 + [0, 0, 1, 1, 1], 2)
        assert cm.counts.tolist() == [[5, 0], [2, 3]]
        rep = per_class_report(cm)
        assert rep[0].precision == pytest.approx(5 / 7)
        assert rep[0].recall == 1.0
        assert rep[0].f1 == pytest.approx(10 / 12)
        assert rep[1].precision == 1.0
        assert rep[1].recall == pytest.approx(0.6)
        assert rep[1].f1 == pytest.approx(0.75)
        assert rep[1].support == 5

    def test_empty_column_zero_not_nan(self):
        cm = confusion([0, 0], [0, 0], 2)
        rep = per_class_report(cm)
        assert rep[1].precision == 0.0
        assert rep[1].recall == 0.0
        assert rep[1].f1 == 0.0

    def test_perfect_diagonal(self):
        cm = confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
        assert all(r.f1 == 1.0 for r in per_class_report(cm))

    def test_against_oracle_random(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 5))
            length = int(rng.integers(1, 9))
            y_true = rng.integers(0, n, length)
            y_pred = rng.integers(0, n, length)
            rep = per_class_report(confusion(y_true, y_pred, n))
            oracle = brute_force_report(y_true, y_pred, n)
            for r, (p, rc, f1) in zip(rep, oracle):
                assert r.precision == pytest.approx(p)
                assert r.recall == pytest.approx(rc)
                assert r.f1 == pytest.approx(f1)


class TestSummary:
    def test_hand_case(self):
        cm = confusion([0] * 5 + [1] * 5, [0] * 5 + [0, 0, 1, 1, 1], 2)
        rep = per_class_report(cm)
        s = summarize(cm, rep)
        assert s.avg_f1 == pytest.approx((10 / 12 + 0.75) / 2)
        f1s = np.array([10 / 12, 0.75])
        assert s.std_f1 == pytest.approx(f1s.std())  # population convention
        assert s.accuracy == pytest.approx(0.8)

    def test_all_perfect(self):
        cm = confusion([0, 1], [0, 1], 2)
        s = summarize(cm, per_class_report(cm))
        assert s.avg_f1 == 1.0
        assert s.std_f1 == 0.0

    def test_population_std_convention(self):
        # explicit: divide-by-n, not n-1
        cm = confusion([0, 0, 1, 1], [0, 0, 1, 0], 2)
        rep = per_class_report(cm)
        s = summarize(cm, rep)
        f1s = np.array([r.f1 for r in rep])
        assert s.std_f1 == pytest.approx(np.sqrt(np.mean((f1s - f1s.mean()) ** 2)))


class TestNormalize:
    def test_even_row(self):
        cm = confusion([0, 0], [0, 1], 2)
        pct = normalize_percent(cm)
        assert pct[0].tolist() == [50.0, 50.0]

    def test_zero_row(self):
        cm = confusion([0], [0], 2)
        assert normalize_percent(cm)[1].tolist() == [0.0, 0.0]

    def test_rows_sum_100(self):
        rng = np.random.default_rng(1)
        cm = confusion(rng.integers(0, 3, 60), rng.integers(0, 3, 60), 3)
        pct = normalize_percent(cm)
        assert np.allclose(pct.sum(axis=1), 100.0, atol=1e-9)


class TestTimed:
    def test_nonnegative(self):
        _, secs = timed(lambda: None)
        assert secs >= 0.0

    def test_returns_result(self):
        val, secs = timed(lambda x: x * 2, 21)
        assert val == 42

    def test_measures_sleep(self):
        _, secs = timed(time.sleep, 0.01)
        assert secs >= 0.009


class TestMacroF1:
    def test_perfect(self):
        assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0

    def test_present_only_ignores_absent_class(self):
        # class 2 absent from truth; present_only averages over 2 classes
        full = macro_f1([0, 1], [0, 1], 3, present_only=False)
        present = macro_f1([0, 1], [0, 1], 3, present_only=True)
        assert present == 1.0
        assert full == pytest.approx(2 / 3)
