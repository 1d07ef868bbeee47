import math

import numpy as np
import pytest

from waveseg.errors import ArgumentError, ShapeError, UndefinedMetricError
from waveseg.metrics import (
    ConfusionMatrix,
    accumulate,
    class_accuracy,
    class_iou,
    format_metric,
    global_accuracy,
    mean_class_accuracy,
    miou,
    psnr,
)


def test_perfect_prediction():
    mask = np.array([[0, 1], [2, 2]])
    cm = accumulate(ConfusionMatrix(3), mask, mask)
    mean, ious = miou(cm)
    assert mean == 1.0
    assert np.array_equal(ious, [1.0, 1.0, 1.0])
    assert global_accuracy(cm) == 1.0


def test_two_class_example():
    truth = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 1, 1])
    cm = ConfusionMatrix(2).update(truth, pred)
    assert cm.counts.tolist() == [[1, 1], [0, 2]]
    mean, ious = miou(cm)
    np.testing.assert_allclose(ious, [0.5, 2 / 3])
    assert mean == pytest.approx(7 / 12)
    assert global_accuracy(cm) == 0.75
    np.testing.assert_allclose(class_accuracy(cm), [0.5, 1.0])
    assert mean_class_accuracy(cm) == pytest.approx(0.75)


def test_absent_class_is_skipped():
    mask = np.zeros((4, 4), dtype=int)
    cm = ConfusionMatrix(3).update(mask, mask)
    ious = class_iou(cm)
    assert ious[0] == 1.0
    assert np.isnan(ious[1]) and np.isnan(ious[2])
    assert miou(cm)[0] == 1.0


def test_empty_matrix():
    cm = ConfusionMatrix(3)
    with pytest.raises(UndefinedMetricError):
        miou(cm)
    with pytest.raises(ZeroDivisionError):
        global_accuracy(cm)
    with pytest.raises(UndefinedMetricError):
        mean_class_accuracy(cm)


def test_ignore_label():
    truth = np.array([0, 255, 1])
    pred = np.array([0, 1, 0])
    cm = ConfusionMatrix(2).update(truth, pred)
    assert cm.total == 2
    assert cm.counts.tolist() == [[1, 0], [1, 0]]


def test_accumulate_leaves_input_untouched():
    cm = ConfusionMatrix(2)
    out = accumulate(cm, [0, 1], [0, 1])
    assert cm.total == 0
    assert out.total == 2


def test_merge_is_commutative(rng):
    a = ConfusionMatrix(3).update(rng.integers(0, 3, 50), rng.integers(0, 3, 50))
    b = ConfusionMatrix(3).update(rng.integers(0, 3, 50), rng.integers(0, 3, 50))
    assert a + b == b + a
    assert (a + b).total == 100


def test_rejects_bad_labels():
    with pytest.raises(ArgumentError):
        ConfusionMatrix(2).update([0, 2], [0, 1])
    with pytest.raises(ArgumentError):
        ConfusionMatrix(2).update([0, 1], [0, -1])
    with pytest.raises(ShapeError):
        ConfusionMatrix(2).update([0, 1], [0, 1, 1])


def test_row_normalized():
    cm = ConfusionMatrix(2, [[1, 3], [0, 0]])
    np.testing.assert_allclose(cm.row_normalized(), [[25.0, 75.0], [0.0, 0.0]])
    frame = cm.to_frame(["bg", "fg"])
    assert frame.loc["bg", "fg"] == 3


class TestPSNR:
    def test_identical_inputs(self, rng):
        x = rng.random((1, 8, 8))
        assert psnr(x, x) == math.inf

    def test_known_value(self):
        a = np.zeros((2, 2))
        b = np.full((2, 2), 0.1)
        assert psnr(a, b) == pytest.approx(20.0)
        assert psnr(a, b, peak=255.0) == pytest.approx(10 * math.log10(255.0 ** 2 / 0.01))

    def test_bad_peak_and_shapes(self):
        with pytest.raises(ArgumentError):
            psnr([1.0], [1.0], peak=0.0)
        with pytest.raises(ShapeError):
            psnr([1.0, 2.0], [1.0])


def test_format_metric():
    assert format_metric(math.inf) == "inf"
    assert format_metric(0.5) == "0.5"
    assert float(format_metric(1 / 3)) == 1 / 3


def test_symmetric_two_class_matrix():
    cm = ConfusionMatrix(2, [[2, 1], [1, 2]])
    mean, ious = miou(cm)
    assert mean == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(ious, [0.5, 0.5], atol=1e-12)
    assert global_accuracy(cm) == pytest.approx(4 / 6, abs=1e-12)


def test_batch_split_invariance(rng):
    truth = rng.integers(0, 3, size=(4, 8, 8))
    pred = rng.integers(0, 3, size=(4, 8, 8))
    whole = ConfusionMatrix(3).update(truth, pred)
    split = ConfusionMatrix(3)
    for t, p in zip(truth, pred):
        split = accumulate(split, t, p)
    assert whole == split
    assert accumulate(ConfusionMatrix(2), [0, 1], [1, 1]).counts.tolist() == [[0, 1], [0, 1]]


def test_relabelling_keeps_summary_metrics(rng):
    truth = rng.integers(0, 3, size=(2, 8, 8))
    pred = rng.integers(0, 3, size=(2, 8, 8))
    relabel = np.array([2, 0, 1])
    cm = ConfusionMatrix(3).update(truth, pred)
    permuted = ConfusionMatrix(3).update(relabel[truth], relabel[pred])
    assert miou(permuted)[0] == pytest.approx(miou(cm)[0], abs=1e-12)
    assert global_accuracy(permuted) == global_accuracy(cm)
    np.testing.assert_allclose(class_iou(permuted)[relabel], class_iou(cm), atol=1e-12)


def test_normalized_frame():
    cm = ConfusionMatrix(3, [[2, 2, 0], [0, 5, 0], [0, 0, 0]])
    frame = cm.to_frame(["bg", "blob", "line"], normalized=True)
    assert frame.index.name == "truth"
    assert frame.loc["bg"].tolist() == [50.0, 50.0, 0.0]
    assert frame.loc["blob", "blob"] == 100.0
    assert frame.loc["line"].sum() == 0.0
