import numpy as np
import pytest

from kanad import metrics as mt
from kanad.metrics import AdjustStrategy
from oracles import brute_auprc, brute_best_f1, counts, f1_prf, random_instance

STRATEGIES = {
    "raw": AdjustStrategy.raw(),
    "point_adjust": AdjustStrategy.point_adjust(),
    "event": AdjustStrategy.event(),
    "k_delay": AdjustStrategy.k_delay(5),
}


# ---------------------------------------------------------------- segments and adjustments

def test_extract_segments_examples():
    assert mt.extract_segments([0, 1, 1, 0, 1]) == [(1, 3), (4, 5)]
    assert mt.extract_segments([0, 0, 0]) == []
    assert mt.extract_segments([1] * 6) == [(0, 6)]


def test_point_adjust_examples():
    np.testing.assert_array_equal(mt.point_adjust([0, 0, 1, 0], [0, 1, 1, 0]), [0, 1, 1, 0])
    np.testing.assert_array_equal(mt.point_adjust([1, 0, 0, 1], [0, 1, 1, 0]), [1, 0, 0, 1])
    with pytest.raises(ValueError):
        mt.point_adjust([0, 1], [0, 1, 1])


def test_point_adjust_raises_f1_over_raw():
    labels = np.array([0, 1, 1, 1, 1, 0, 0, 0])
    preds = np.array([0, 1, 0, 0, 0, 0, 0, 0])
    raw = f1_prf(*counts(preds, labels, "raw"))[0]
    adj = mt.point_adjust(preds, labels)
    pa = f1_prf(*counts(adj, labels, "raw"))[0]
    assert pa == 1 and raw < pa


def segment_case(hit):
    labels = np.zeros(40, dtype=int)
    labels[10:30] = 1
    preds = np.zeros(40, dtype=int)
    preds[hit] = 1
    return preds, labels


def test_k_delay_examples():
    preds, labels = segment_case(12)
    assert mt.k_delay_adjust(preds, labels, 5)[10:30].all()
    preds, labels = segment_case(16)  # delay 6 > 5
    assert not mt.k_delay_adjust(preds, labels, 5)[10:30].any()
    preds, labels = segment_case(15)  # delay 5 is still on time
    assert mt.k_delay_adjust(preds, labels, 5)[10:30].all()


def test_k_delay_keeps_false_positives():
    preds, labels = segment_case(35)
    out = mt.k_delay_adjust(preds, labels, 5)
    assert out[35] == 1 and out.sum() == 1


def test_k_delay_equals_pa_for_short_segments():
    rng = np.random.default_rng(0)
    for _ in range(200):
        labels = np.zeros(30, dtype=int)
        labels[5:9] = 1
        labels[20:22] = 1
        preds = (rng.random(30) < 0.3).astype(int)
        np.testing.assert_array_equal(mt.k_delay_adjust(preds, labels, 4), mt.point_adjust(preds, labels))


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        AdjustStrategy.k_delay(0)
    with pytest.raises(ValueError):
        mt.k_delay_adjust([0, 1], [0, 1], 0)


def test_event_collapse_examples():
    labels = np.zeros(200, dtype=int)
    labels[50:150] = 1
    preds = labels.copy()
    ep, el = mt.event_collapse(preds, labels)
    assert (ep.tolist(), el.tolist()) == ([1], [1])

    labels = np.zeros(30, dtype=int)
    labels[2:5] = 1
    labels[10:14] = 1
    preds = np.zeros(30, dtype=int)
    preds[11] = 1
    ep, el = mt.event_collapse(preds, labels)
    tp = int(((ep == 1) & (el == 1)).sum())
    assert tp / el.sum() == 0.5

    labels = np.zeros(40, dtype=int)
    labels[0] = 1
    preds = np.zeros(40, dtype=int)
    preds[20:30] = 1
    ep, el = mt.event_collapse(preds, labels)
    assert int(((ep == 1) & (el == 0)).sum()) == 1


def test_event_count_independent_of_lengths():
    rng = np.random.default_rng(1)
    for _ in range(100):
        _, labels = random_instance(rng)
        _, el = mt.event_collapse(np.zeros_like(labels), labels)
        assert el.sum() == len(mt.extract_segments(labels))


def test_f1_from_counts_degenerate():
    f1, p, r = mt.f1_from_counts(0, 0, 5)
    assert (f1, p, r) == (0, 0, 0)


# ---------------------------------------------------------------- best F1 / AUPRC examples

@pytest.mark.parametrize("name", list(STRATEGIES))
def test_scores_equal_labels_is_perfect(name):
    labels = np.array([0, 1, 1, 0, 0, 1, 0])
    res = mt.best_f1(labels.astype(float), labels, STRATEGIES[name])
    assert res.f1 == 1.0 and res.threshold == 1.0


def test_point_adjust_example_by_hand():
    res = mt.best_f1([0.1, 0.2, 0.9, 0.1, 0.1], [0, 0, 1, 1, 0], mt.POINT_ADJUST)
    assert res.f1 == 1.0 and res.threshold == 0.9


def test_best_f1_beats_all_positive_baseline():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = 300
        labels = (rng.random(n) < 0.1).astype(int)
        labels[0] = 1
        r = labels.mean()
        res = mt.best_f1(rng.random(n), labels, AdjustStrategy.raw())
        assert res.f1 >= 2 * r / (1 + r) - 1e-12


def test_no_positive_labels():
    with pytest.raises(mt.NoPositiveLabelsError):
        mt.best_f1([0.1, 0.2], [0, 0])
    with pytest.raises(mt.NoPositiveLabelsError):
        mt.auprc([0.1, 0.2], [0, 0])


def test_auprc_examples():
    labels = np.array([0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0])
    assert mt.auprc(labels.astype(float), labels) == 1.0
    const = np.full(12, 0.3)
    # single PR point: everything flagged, PA precision = 3/12
    assert mt.auprc(const, labels) == pytest.approx(3 / 12)
    scores = np.array([0.1, 0.5, 0.9, 0.2, 0.3, 0.1, 0.6, 0.4, 0.2, 0.7, 0.1, 0.0])
    assert mt.auprc(scores, labels) == pytest.approx(brute_auprc(scores, labels, "point_adjust"), abs=1e-12)


def test_sweep_starts_at_infinity():
    sw = mt.sweep([0.3, 0.1, 0.3], [0, 1, 0], mt.POINT_ADJUST)
    assert sw.thresholds[0] == np.inf and sw.tp[0] == 0 and sw.fp[0] == 0
    assert list(sw.thresholds[1:]) == [0.3, 0.1]


# ---------------------------------------------------------------- oracle equivalence

@pytest.mark.parametrize("name", list(STRATEGIES))
def test_best_f1_matches_brute_force(name):
    rng = np.random.default_rng(list(STRATEGIES).index(name))
    for _ in range(250):
        scores, labels = random_instance(rng)
        got = mt.best_f1(scores, labels, STRATEGIES[name])
        want = brute_best_f1(list(scores), list(labels), name, 5)
        assert got.f1 == pytest.approx(want[0], abs=1e-12)
        assert got.threshold == want[1]
        assert got.precision == pytest.approx(want[2], abs=1e-12)
        assert got.recall == pytest.approx(want[3], abs=1e-12)


@pytest.mark.parametrize("name", list(STRATEGIES))
def test_auprc_matches_brute_force(name):
    rng = np.random.default_rng(7 + len(name))
    for _ in range(100):
        scores, labels = random_instance(rng)
        got = mt.auprc(scores, labels, STRATEGIES[name])
        assert got == pytest.approx(brute_auprc(list(scores), list(labels), name, 5), abs=1e-12)


# ---------------------------------------------------------------- invariants

def test_adjustment_dominance_per_threshold():
    rng = np.random.default_rng(3)
    for _ in range(300):
        scores, labels = random_instance(rng)
        k = int(rng.integers(1, 8))
        raw = mt.sweep(scores, labels, AdjustStrategy.raw()).f1()[0]
        pa = mt.sweep(scores, labels, mt.POINT_ADJUST).f1()[0]
        kd = mt.sweep(scores, labels, AdjustStrategy.k_delay(k)).f1()[0]
        assert np.all(pa >= raw - 1e-12)
        assert np.all(pa >= kd - 1e-12)


@pytest.mark.parametrize(
    "transform", [lambda s: 3 * s + 1, np.exp, lambda s: np.log1p(s) ** 3], ids=["affine", "exp", "log-cube"]
)
def test_monotone_transform_invariance(transform):
    rng = np.random.default_rng(4)
    for _ in range(150):
        scores, labels = random_instance(rng)
        moved = transform(scores)
        for strategy in STRATEGIES.values():
            a, b = mt.sweep(scores, labels, strategy), mt.sweep(moved, labels, strategy)
            np.testing.assert_array_equal(a.tp, b.tp)
            np.testing.assert_array_equal(a.fp, b.fp)
            assert mt.best_f1(scores, labels, strategy).f1 == mt.best_f1(moved, labels, strategy).f1
            assert mt.auprc(scores, labels, strategy) == mt.auprc(moved, labels, strategy)


def test_metrics_lie_in_unit_interval():
    rng = np.random.default_rng(5)
    for _ in range(100):
        scores, labels = random_instance(rng)
        rep = mt.evaluate(scores, labels)
        for key, val in rep.to_dict().items():
            if key.endswith("threshold") or key == "delay_k":
                continue
            assert 0.0 <= val <= 1.0
        for f1, p, r in [(rep.best_f1, rep.best_f1_precision, rep.best_f1_recall),
                         (rep.event_f1, rep.event_f1_precision, rep.event_f1_recall)]:
            expect = 2 * p * r / (p + r) if p + r else 0.0
            assert abs(f1 - expect) < 1e-9


# ---------------------------------------------------------------- report

def test_report_serialization():
    rep = mt.evaluate([0.1, 0.9, 0.2, 0.8], [0, 1, 0, 1], k=3)
    text = rep.to_text()
    assert "event_f1 = 1.0" in text and "delay_k = 3" in text
    header, row = rep.to_csv().strip().split("\n")
    assert header.split(",")[0] == "best_f1"
    assert len(header.split(",")) == len(row.split(","))
