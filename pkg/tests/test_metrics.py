import numpy as np
import pytest

from mtnetkit import metrics as Mx


def boxes(rng, n):
    return np.c_[rng.uniform(0, 300, (n, 2)), rng.uniform(5, 80, (n, 2))]


def test_precision_examples():
    assert Mx.precision_rate([0, 10, 20, 21], 20) == 0.75
    with pytest.raises(ValueError):
        Mx.precision_rate([], 20)
    with pytest.raises(ValueError):
        Mx.precision_rate([1.0], 0)


def test_success_uses_strict_threshold():
    assert Mx.success_rate([1.0]) == 20 / 21
    assert Mx.success_rate([0.0]) == 0.0
    assert Mx.success_curve([0.5])[10] == 0.0 and Mx.success_curve([0.5])[9] == 1.0


def test_curve_shapes():
    assert Mx.precision_curve([3.0]).shape == (51,)
    assert Mx.success_curve([0.3]).shape == (21,)
    assert Mx.normalized_precision_curve([0.1]).shape == (101,)


def test_offset_gt_gives_zero_precision():
    gt = boxes(np.random.default_rng(0), 50)
    pred = gt + [30, 0, 0, 0]
    assert Mx.SequenceEval.from_boxes("s", gt, pred).scores()["PR"] == 0.0


def test_zero_gt_rows_are_skipped():
    gt = np.array([[10, 10, 20, 20], [0, 0, 0, 0], [10, 10, 20, 20]], dtype=float)
    pred = np.array([[10, 10, 20, 20], [500, 500, 5, 5], [10, 10, 20, 20]], dtype=float)
    ev = Mx.SequenceEval.from_boxes("s", gt, pred)
    assert len(ev.errors) == 2 and ev.scores()["PR"] == 1.0


def test_row_mismatch():
    with pytest.raises(ValueError):
        Mx.SequenceEval.from_boxes("s", np.ones((3, 4)), np.ones((2, 4)))


def test_attribute_aggregate_concatenates_frames():
    rng = np.random.default_rng(1)
    gt_a, gt_b = boxes(rng, 10), boxes(rng, 30)
    a = Mx.SequenceEval.from_boxes("a", gt_a, gt_a, ("LI",))
    b = Mx.SequenceEval.from_boxes("b", gt_b, gt_b + [40, 0, 0, 0], ("LI", "FM"))
    pr, _ = Mx.attribute_aggregate([a, b], "LI")
    assert pr == 10 / 40  # frame-weighted, not the mean of 1.0 and 0.0
    assert Mx.attribute_aggregate([a, b], "TC") is None
    with pytest.raises(ValueError):
        Mx.attribute_aggregate([a], "XX")


def test_read_attributes(tmp_path):
    p = tmp_path / "attr.txt"
    p.write_text("# name attrs\nseqA LI,FM\nseqB\n")
    assert Mx.read_attributes(p) == {"seqA": ("LI", "FM"), "seqB": ()}
    p.write_text("seqA NOPE\n")
    with pytest.raises(ValueError):
        Mx.read_attributes(p)
    p.write_text("")
    assert Mx.read_attributes(p) == {}
