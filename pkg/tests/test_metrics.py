from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowcam.metrics import ConfusionMatrix, class_metrics, confusion, macro_metrics, micro_accuracy


def cm(rows, labels=None):
    rows = np.array(rows)
    return ConfusionMatrix(rows, tuple(labels or [f"c{i}" for i in range(len(rows))]))


def test_perfect_is_diagonal():
    C = confusion(list("abca"), list("abca"), "abc")
    assert np.array_equal(C.counts, np.diag([2, 1, 1]))


def test_all_wrong_anti_diagonal():
    C = confusion(list("abab"), list("baba"), "ab")
    assert np.array_equal(C.counts, [[0, 2], [2, 0]])


def test_three_class_toy():
    C = confusion(["A", "A", "B", "C"], ["A", "B", "B", "C"], ["A", "B", "C"])
    assert np.array_equal(C.counts, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])


def test_unknown_label():
    with pytest.raises(ValueError, match="alphabet"):
        confusion(["A"], ["Z"], ["A", "B"])
    with pytest.raises(ValueError):
        confusion(["A"], [], ["A"])


def test_hand_matrix_class0():
    m = class_metrics(cm([[8, 2], [1, 9]]), 0)
    assert (m.tp, m.fn, m.fp, m.tn) == (8, 2, 1, 9)
    assert m.precision == 8 / 9
    assert m.recall == 0.8
    assert m.accuracy == 17 / 20
    assert m.fn_rate == 0.2
    assert m.f1 == 16 / 19  # 2 TP / (2 TP + FP + FN)


def test_hand_matrix_macro():
    mac = macro_metrics(cm([[8, 2], [1, 9]]))
    assert mac["recall"] == 0.85
    assert mac["precision"] == float((Fraction(8, 9) + Fraction(9, 11)) / 2)
    assert mac["accuracy"] == 17 / 20


def test_diagonal_all_ones():
    C = cm(np.diag([3, 4, 5]))
    for i in range(3):
        m = class_metrics(C, i)
        assert m.precision == m.recall == m.f1 == 1.0


def test_empty_class_flagged_zero():
    m = class_metrics(cm([[5, 0, 0], [1, 4, 0], [0, 0, 0]]), 2)
    assert m.precision == m.recall == m.f1 == m.fn_rate == 0
    assert set(m.zero_division) >= {"precision", "recall", "f1", "fn_rate"}


def test_index_out_of_range():
    with pytest.raises(IndexError):
        class_metrics(cm([[1]]), 3)


def test_identical_per_class_macro():
    C = cm([[5, 1], [1, 5]])
    mac = macro_metrics(C)
    one = class_metrics(C, 0)
    assert mac["precision"] == one.precision and mac["recall"] == one.recall


def test_empty_matrix_error():
    with pytest.raises(ValueError):
        macro_metrics(cm(np.zeros((2, 2), dtype=int)))
    with pytest.raises(ValueError):
        macro_metrics(ConfusionMatrix(np.zeros((0, 0)), ()))


matrices = st.integers(2, 5).flatmap(
    lambda k: st.lists(st.lists(st.integers(0, 50), min_size=k, max_size=k), min_size=k, max_size=k))


@settings(max_examples=300, deadline=None)
@given(matrices, st.randoms(use_true_random=False))
def test_metric_invariants(rows, rnd):
    C = cm(rows)
    for i in range(len(rows)):
        m = class_metrics(C, i)
        assert m.tp + m.tn + m.fp + m.fn == C.total
        for v in (m.precision, m.recall, m.f1, m.fn_rate, m.accuracy):
            assert 0 <= v <= 1
        if m.tp + m.fn > 0:
            assert m.fn_rate == float(1 - Fraction(m.tp, m.tp + m.fn))
            assert abs(m.fn_rate - (1 - m.recall)) <= 1e-15
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    P = np.array(rows)[np.ix_(perm, perm)]
    assert micro_accuracy(cm(P)) == micro_accuracy(C)
