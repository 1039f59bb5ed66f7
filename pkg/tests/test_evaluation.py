import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recompress.errors import DegenerateLabels, LengthMismatch, ShapeMismatch
from recompress.evaluation import ImageResult, best_threshold_f1, build_report, image_accuracy, pixel_f1, roc_auc
from recompress.localization import Heatmap


def test_f1_worked_example():
    # TP=2, FP=1, FN=1
    h = np.array([[0.9, 0.8, 0.7, 0.1]])
    gt = np.array([[1, 1, 0, 1]], dtype=bool)
    assert pixel_f1(h, gt, 0.5) == pytest.approx(2 / 3, abs=1e-4)


def test_f1_edge_cases():
    assert pixel_f1(np.zeros((2, 2)), np.zeros((2, 2), bool)) == 0.0
    assert pixel_f1(np.ones((2, 2)), np.ones((2, 2), bool)) == 1.0
    assert pixel_f1(Heatmap(np.zeros((1, 2))), np.array([[True, False]])) == 0.0
    with pytest.raises(ShapeMismatch):
        pixel_f1(np.zeros((2, 2)), np.zeros((2, 3), bool))


def test_auc_worked_example():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_ties_and_errors():
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(DegenerateLabels):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(LengthMismatch):
        roc_auc([0.1, 0.2], [1])


def test_best_threshold_prefers_lowest_on_ties():
    h = np.array([[0.2, 0.6]])
    gt = np.array([[False, True]])
    f1, thr = best_threshold_f1(h, gt)
    assert f1 == 1.0 and thr == 0.6
    f1, thr = best_threshold_f1(np.ones((1, 2)), np.ones((1, 2), bool))
    assert (f1, thr) == (1.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.3, 0.5, 0.7, 1.0]), st.booleans()), min_size=1, max_size=64))
def test_best_f1_dominates_every_threshold(pairs):
    h = np.array([p[0] for p in pairs])[None]
    gt = np.array([p[1] for p in pairs])[None]
    best, thr = best_threshold_f1(h, gt)
    for t in np.linspace(0, 1, 21):
        assert best >= pixel_f1(h, gt, t) - 1e-12
    assert pixel_f1(h, gt, thr) == pytest.approx(best)


def test_accuracy():
    assert image_accuracy([0.9, 0.2, 0.5], [1, 0, 0]) == pytest.approx(2 / 3)
    assert image_accuracy([], []) == 0.0


def test_report_aggregation():
    results = [
        ImageResult("t1", 1, 0.9, 0.5, 0.8, 0.4),
        ImageResult("a1", 0, 0.3),
        ImageResult("t0", 1, 0.7, 0.1, 0.6, 0.2),
    ]
    r = build_report(results, ["x"])
    assert r.n_images == 3 and r.n_tampered == 2
    assert r.f1_fixed == pytest.approx(0.3)
    assert r.f1_best == pytest.approx(0.7)
    assert r.best_threshold == pytest.approx(0.3)
    assert r.auc == 1.0 and r.accuracy == 1.0
    assert [p["id"] for p in r.per_image] == ["a1", "t0", "t1"]
    assert json.loads(r.to_json())["skipped"] == ["x"]


def test_report_without_negatives_has_no_auc():
    assert build_report([ImageResult("t", 1, 0.9, 1.0, 1.0, 0.5)]).auc is None
