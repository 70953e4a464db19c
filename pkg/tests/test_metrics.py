"""Metric implementations against independent brute-force counting oracles."""

import numpy as np
import pytest

from wsseg.metrics import (
    accuracy,
    class_average_f,
    evaluate_many,
    evaluate_pair,
    jaccard_index,
    overfill_underfill,
    segment_iou,
)

# ------------------------------------------------------- brute-force oracles


def oracle_accuracy(pred, truth):
    return sum(1 for p, t in zip(pred, truth) if p == t) / len(pred)


def oracle_f(pred, truth):
    scores = []
    for c in sorted(set(truth)):
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, truth) if p != c and t == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(scores) / len(scores) if scores else 0.0


def oracle_ji(pred, truth):
    scores = []
    for c in sorted(set(truth) | set(pred)):
        pred_set = {i for i, p in enumerate(pred) if p == c}
        truth_set = {i for i, t in enumerate(truth) if t == c}
        union = pred_set | truth_set
        if union:
            scores.append(len(pred_set & truth_set) / len(union))
    return sum(scores) / len(scores) if scores else 0.0


def oracle_segments(labels):
    segs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[i - 1]:
            segs.append((labels[start], start, i - 1))
            start = i
    return segs


def oracle_match(seg, pred_segs):
    best, best_ov = None, 0
    for ps in pred_segs:
        if ps[0] != seg[0]:
            continue
        ov = min(seg[2], ps[2]) - max(seg[1], ps[1]) + 1
        if ov > best_ov:
            best, best_ov = ps, ov
    return best


def oracle_iou(pred, truth):
    pred_segs = oracle_segments(pred)
    scores = []
    for seg in oracle_segments(truth):
        match = oracle_match(seg, pred_segs)
        if match is None:
            scores.append(0.0)
            continue
        samples = set(range(seg[1], seg[2] + 1))
        matched = set(range(match[1], match[2] + 1))
        scores.append(len(samples & matched) / len(samples | matched))
    return sum(scores) / len(scores) if scores else 0.0


def oracle_ou(pred, truth):
    """Set-based recount: underfill FNs inside truth segments outside the
    matched prediction, overfill FPs inside predicted segments outside the
    matched truth segment; union of marked samples over T."""
    pred_segs = oracle_segments(pred)
    truth_segs = oracle_segments(truth)
    marked = set()
    for seg in truth_segs:
        match = oracle_match(seg, pred_segs)
        if match is None or min(seg[2], match[2]) < max(seg[1], match[1]):
            continue
        inside = set(range(seg[1], seg[2] + 1))
        covered = set(range(match[1], match[2] + 1))
        marked |= {i for i in inside - covered if pred[i] != seg[0]}
    for seg in pred_segs:
        match = oracle_match(seg, truth_segs)
        if match is None or min(seg[2], match[2]) < max(seg[1], match[1]):
            continue
        inside = set(range(seg[1], seg[2] + 1))
        covered = set(range(match[1], match[2] + 1))
        marked |= {i for i in inside - covered if truth[i] != seg[0]}
    return len(marked) / len(pred)


# ----------------------------------------------------------------- tests


def test_accuracy_trivial_cases():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert accuracy([1, 2, 0], [0, 1, 2]) == 0.0
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75


def test_accuracy_one_vs_rest_flag():
    pred = np.array([0, 1, 1, 0])
    truth = np.array([0, 1, 0, 0])
    got = accuracy(pred, truth, one_vs_rest=True)
    np.testing.assert_allclose(got, 1.0 - 2.0 * 1 / (2 * 4), rtol=1e-12)


def test_f_spec_example():
    truth = [0, 0, 1, 1]
    pred = [0, 1, 1, 1]
    np.testing.assert_allclose(class_average_f(pred, truth), (2 / 3 + 0.8) / 2, rtol=1e-12)


def test_f_absent_class_excluded():
    truth = [0, 0, 0, 0]
    pred = [0, 0, 0, 0]
    assert class_average_f(pred, truth, num_classes=5) == 1.0


def test_ji_spec_example():
    truth = [0, 0, 1, 1]
    pred = [0, 1, 1, 1]
    np.testing.assert_allclose(jaccard_index(pred, truth), (0.5 + 2 / 3) / 2, rtol=1e-12)


def test_ji_disjoint_zero():
    assert jaccard_index([1, 1, 0, 0], [0, 0, 1, 1]) == 0.0


def test_iou_spec_example():
    truth = [0, 0, 0, 0]
    pred = [0, 0, 1, 1]
    np.testing.assert_allclose(segment_iou(pred, truth), 0.5, rtol=1e-12)


def test_iou_no_shared_class_zero():
    assert segment_iou([1, 1, 1], [0, 0, 0]) == 0.0


def test_ou_spec_examples():
    # truth A on [2,5] of T=8; filler classes never match so only the A
    # segment's boundary errors count
    truth = [7, 7, 0, 0, 0, 0, 8, 8]
    pred = [5, 0, 0, 0, 0, 0, 0, 6]  # matched A starts 1 earlier, ends 1 later
    np.testing.assert_allclose(overfill_underfill(pred, truth), 2 / 8, rtol=1e-12)
    pred2 = [5, 5, 5, 0, 0, 6, 6, 6]  # matched A starts 1 later, ends 1 earlier
    np.testing.assert_allclose(overfill_underfill(pred2, truth), 2 / 8, rtol=1e-12)


def test_ou_identity_zero(rng):
    labels = rng.integers(0, 4, size=50)
    assert overfill_underfill(labels, labels) == 0.0


def test_ou_spurious_boundary_never_decreases(rng):
    for _ in range(30):
        truth = np.repeat(rng.integers(0, 3, size=4), rng.integers(3, 8, size=4))
        pred = truth.copy()
        base = overfill_underfill(pred, truth)
        i = int(rng.integers(1, len(pred) - 1))
        pred2 = pred.copy()
        pred2[i] = (pred2[i] + 1) % 3
        assert overfill_underfill(pred2, truth) >= base


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        accuracy([0, 1], [0, 1, 2])


@pytest.mark.parametrize("seed", range(4))
def test_all_metrics_match_oracles_random(seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        t = int(rng.integers(1, 65))
        c = int(rng.integers(2, 6))
        # segment-ish labels: random run lengths
        truth = rng.integers(0, c, size=t)
        pred = truth.copy()
        flips = rng.random(t) < 0.3
        pred[flips] = rng.integers(0, c, size=int(flips.sum()))
        assert accuracy(pred, truth) == oracle_accuracy(pred.tolist(), truth.tolist())
        np.testing.assert_allclose(
            class_average_f(pred, truth), oracle_f(pred.tolist(), truth.tolist()), rtol=1e-12
        )
        np.testing.assert_allclose(
            jaccard_index(pred, truth), oracle_ji(pred.tolist(), truth.tolist()), rtol=1e-12
        )
        np.testing.assert_allclose(
            segment_iou(pred, truth), oracle_iou(pred.tolist(), truth.tolist()), rtol=1e-12
        )
        np.testing.assert_allclose(
            overfill_underfill(pred, truth), oracle_ou(pred.tolist(), truth.tolist()),
            rtol=1e-12,
        )


def test_relabeling_invariance(rng):
    truth = rng.integers(0, 4, size=40)
    pred = rng.integers(0, 4, size=40)
    perm = np.array([2, 3, 1, 0])
    for fn in (accuracy, class_average_f, jaccard_index, segment_iou, overfill_underfill):
        np.testing.assert_allclose(fn(pred, truth), fn(perm[pred], perm[truth]), rtol=1e-12)


def test_report_aggregation_sums_counts(rng):
    pairs = []
    for _ in range(5):
        t = int(rng.integers(10, 40))
        truth = rng.integers(0, 3, size=t)
        pred = rng.integers(0, 3, size=t)
        pairs.append((pred, truth))
    report = evaluate_many(pairs, 3)
    # accuracy must equal the concatenated-stream accuracy
    cat_pred = np.concatenate([p for p, _ in pairs])
    cat_truth = np.concatenate([t for _, t in pairs])
    np.testing.assert_allclose(report.acc, accuracy(cat_pred, cat_truth), rtol=1e-12)
    np.testing.assert_allclose(report.f_m, class_average_f(cat_pred, cat_truth, 3), rtol=1e-12)
    # segment metrics must NOT merge segments across sequence boundaries
    ious = [segment_iou(p, t) for p, t in pairs]
    counts = [len(oracle_segments(t.tolist())) for _, t in pairs]
    want = sum(i * n for i, n in zip(ious, counts)) / sum(counts)
    np.testing.assert_allclose(report.iou, want, rtol=1e-12)
    assert report.per_class_f.shape == (3,)
    assert 0.0 <= report.o_u <= 1.0


def test_report_single_pair_fields(rng):
    truth = rng.integers(0, 3, size=30)
    pred = rng.integers(0, 3, size=30)
    report = evaluate_pair(pred, truth, 3)
    for value in report.as_row().values():
        assert 0.0 <= value <= 1.0
