import math

import numpy as np
import pytest

from szbench.annotations import Event, EventList
from szbench.errors import ContractError
from szbench.score import (
    Counts,
    ScoringParams,
    compute_metrics,
    extend_reference,
    match_events,
    merge_events,
    regularize,
    score_event_based,
    score_sample_based,
    split_events,
)

GRID = 0.25


def _events(duration, *intervals):
    return EventList(duration, tuple(Event.between(on, off) for on, off in intervals))


def _intervals(events):
    return [(e.onset_s, e.end_s) for e in events]


# Brute-force evaluator on a 0.25 s grid. Only valid for endpoints on the grid.


def _mask(intervals, n):
    mask = np.zeros(n, dtype=bool)
    for on, off in intervals:
        mask[round(on / GRID) : round(off / GRID)] = True
    return mask


def _runs(mask):
    edges = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
    return [[a, b] for a, b in zip(edges[::2], edges[1::2])]


def _grid_regularize(intervals, n, params):
    runs = _runs(_mask(intervals, n))
    merged = []
    for run in runs:
        if merged and (run[0] - merged[-1][1]) * GRID < params.merge_gap_s:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    max_cells = round(params.max_event_s / GRID)
    fragments = []
    for start, stop in merged:
        while stop - start > max_cells:
            fragments.append((start, start + max_cells))
            start += max_cells
        fragments.append((start, stop))
    return [(a * GRID, b * GRID) for a, b in fragments]


def _grid_counts(duration, ref, hyp, params):
    n = round(duration / GRID)
    ref_r = _grid_regularize(ref, n, params)
    hyp_r = _grid_regularize(hyp, n, params)
    extended = [
        _mask(
            [
                (
                    max(0.0, on - params.preictal_tolerance_s),
                    min(duration, off + params.postictal_tolerance_s),
                )
            ],
            n,
        )
        for on, off in ref_r
    ]
    hyp_masks = [_mask([interval], n) for interval in hyp_r]
    tp = sum(
        any(np.sum(e & h) * GRID > params.min_overlap_s and np.any(e & h) for h in hyp_masks)
        for e in extended
    )
    fp = sum(not any(np.any(e & h) for e in extended) for h in hyp_masks)
    return tp, fp, len(ref_r) - tp, len(ref_r), len(hyp_r)


def _random_instance(rng):
    n = int(rng.integers(240, 28801))
    lists = []
    for _ in range(2):
        intervals = []
        for _ in range(int(rng.integers(0, 11))):
            length = min(int(rng.integers(4, 2401)), n)
            onset = int(rng.integers(0, n - length + 1))
            intervals.append((onset * GRID, (onset + length) * GRID))
        lists.append(intervals)
    return n * GRID, lists[0], lists[1]


def _check_against_grid(rng, params, instances):
    for _ in range(instances):
        duration, ref, hyp = _random_instance(rng)
        counts = score_event_based(_events(duration, *ref), _events(duration, *hyp), params)
        expected = _grid_counts(duration, ref, hyp, params)
        assert (counts.tp, counts.fp, counts.fn, counts.ref_total, counts.hyp_total) == expected, (
            duration,
            ref,
            hyp,
        )
        assert counts.duration_s == duration


def test_event_scoring_matches_grid_evaluator():
    _check_against_grid(np.random.default_rng(11), ScoringParams(), 1000)


def test_event_scoring_matches_grid_evaluator_with_other_parameters():
    rng = np.random.default_rng(12)
    for _ in range(10):
        params = ScoringParams(
            min_overlap_s=float(rng.integers(0, 40)) * GRID,
            preictal_tolerance_s=float(rng.integers(0, 400)) * GRID,
            postictal_tolerance_s=float(rng.integers(0, 400)) * GRID,
            merge_gap_s=float(rng.integers(0, 800)) * GRID,
            max_event_s=float(rng.integers(240, 2400)) * GRID,
        )
        _check_against_grid(rng, params, 10)


def test_parameter_defaults():
    params = ScoringParams()
    assert params.to_dict() == {
        "min_overlap_s": 0.0,
        "preictal_tolerance_s": 30.0,
        "postictal_tolerance_s": 60.0,
        "merge_gap_s": 90.0,
        "max_event_s": 300.0,
        "sample_period_s": 1.0,
    }


def test_parameter_validation():
    with pytest.raises(ContractError):
        ScoringParams(preictal_tolerance_s=-1)
    with pytest.raises(ContractError):
        ScoringParams(max_event_s=0)
    with pytest.raises(ContractError):
        ScoringParams(sample_period_s=0)
    with pytest.raises(ContractError):
        ScoringParams(merge_gap_s=math.inf)
    with pytest.raises(ContractError):
        ScoringParams(min_overlap_s=True)
    with pytest.raises(ContractError):
        ScoringParams.from_dict({"merge_gap": 90})
    params = ScoringParams().replace(merge_gap_s=60, preictal_tolerance_s=None)
    assert params.merge_gap_s == 60.0
    assert params.preictal_tolerance_s == 30.0
    assert ScoringParams.from_dict(params.to_dict()) == params
    assert params.fingerprint() != ScoringParams().fingerprint()
    assert "merge_gap_s=60" in params.describe()


def test_merge_examples():
    assert _intervals(merge_events(_events(3600, (0, 10), (50, 60)), 90)) == [(0, 60)]
    assert _intervals(merge_events(_events(3600, (0, 10), (100, 110)), 90)) == [
        (0, 10),
        (100, 110),
    ]
    chained = merge_events(_events(3600, (0, 10), (95, 100), (100, 105)), 60)
    assert _intervals(chained) == [(0, 10), (95, 105)]


def test_merge_gap_boundary():
    assert len(merge_events(_events(3600, (0, 10), (99.999, 110)), 90)) == 1
    assert len(merge_events(_events(3600, (0, 10), (100.0, 110)), 90)) == 2


def test_merge_is_transitive():
    merged = merge_events(_events(3600, (0, 10), (80, 90), (160, 170), (500, 510)), 90)
    assert _intervals(merged) == [(0, 170), (500, 510)]


def test_split_examples():
    assert _intervals(split_events(_events(3600, (0, 720)), 300)) == [
        (0, 300),
        (300, 600),
        (600, 720),
    ]
    assert _intervals(split_events(_events(3600, (0, 300)), 300)) == [(0, 300)]
    fragments = split_events(_events(3600, (10, 910)), 300)
    assert _intervals(fragments) == [(10, 310), (310, 610), (610, 910)]
    assert fragments.events[-1].duration_s == 300


def test_split_duration_boundary():
    assert len(split_events(_events(3600, (0, 300.0)), 300)) == 1
    fragments = split_events(_events(3600, (0, 300.001)), 300)
    assert len(fragments) == 2
    assert fragments.events[0].end_s == 300


def _check_fragments(fragments, onset, duration, max_event_s, n):
    assert len(fragments) == n
    assert fragments.events[0].onset_s == onset
    assert fragments.events[-1].end_s == pytest.approx(onset + duration)
    for a, b in zip(fragments.events, fragments.events[1:]):
        assert a.end_s == pytest.approx(b.onset_s)
    assert all(0 < e.duration_s <= max_event_s + 1e-6 for e in fragments)


@pytest.mark.parametrize(
    ("onset", "duration", "n"),
    [(7.315, 600.0, 2), (600.4, 600.0, 2), (3206.6, 900.0, 3), (55.65, 1200.0, 4), (12.3456, 650.5, 3)],
)
def test_split_decimal_onsets(onset, duration, n):
    fragments = split_events(EventList(7200.0, (Event(onset, duration),)), 300.0)
    _check_fragments(fragments, onset, duration, 300.0, n)


def test_split_decimal_multiples():
    rng = np.random.default_rng(15)
    for _ in range(2000):
        max_event_s = float(rng.choice([300.0, 90.0, 45.5, 12.345]))
        n = int(rng.integers(1, 7))
        duration = n * max_event_s
        onset = round(float(rng.uniform(0, 3000)), 3)
        fragments = split_events(EventList(onset + duration + 1, (Event(onset, duration),)), max_event_s)
        _check_fragments(fragments, onset, duration, max_event_s, n)
        assert split_events(fragments, max_event_s) == fragments


def test_decimal_onsets_are_scored():
    params = ScoringParams()
    ref = EventList(3600.0, (Event(7.315, 600.0), Event(1800.123, 900.0)))
    regular = regularize(ref, params)
    assert [len(regularize(EventList(3600.0, (e,)), params)) for e in ref] == [2, 3]
    assert len(regular) == 5
    counts = score_event_based(ref, ref, params)
    assert (counts.tp, counts.fp, counts.fn) == (5, 0, 0)
    counts = score_event_based(ref, EventList.empty(3600.0), params)
    assert (counts.tp, counts.fp, counts.fn) == (0, 0, 5)


def test_regularize_examples():
    params = ScoringParams()
    regular = regularize(_events(3600, (0, 100), (50, 150)), params)
    assert _intervals(regular) == [(0, 150)]
    assert regular.regularized
    assert _intervals(regularize(_events(3600, (0, 200), (250, 500)), params)) == [
        (0, 300),
        (300, 500),
    ]
    empty = regularize(EventList.empty(3600), params)
    assert len(empty) == 0
    assert empty.regularized


def test_regularize_is_idempotent():
    rng = np.random.default_rng(13)
    params = ScoringParams()
    for _ in range(200):
        duration, ref, _ = _random_instance(rng)
        once = regularize(_events(duration, *ref), params)
        assert regularize(once, params) == once
        for a, b in zip(once.events, once.events[1:]):
            gap = b.onset_s - a.end_s
            assert gap == 0 or gap >= params.merge_gap_s
        assert all(e.duration_s <= params.max_event_s for e in once)


def test_extend_reference():
    params = ScoringParams()
    assert extend_reference(_events(3600, (100, 130)), params) == [(70, 190)]
    assert extend_reference(_events(3600, (10, 40)), params) == [(0, 100)]
    assert extend_reference(_events(3600, (3550, 3590)), params) == [(3520, 3600)]


def _counts(ref, hyp, params=None, duration=3600):
    counts = score_event_based(_events(duration, *ref), _events(duration, *hyp), params or ScoringParams())
    return counts.tp, counts.fp, counts.fn


def test_match_examples():
    assert _counts([(100, 130)], [(80, 90)]) == (1, 0, 0)
    assert _counts([(100, 130)], [(200, 210)]) == (0, 1, 1)
    assert _counts([], [(0, 10), (200, 210), (400, 410)]) == (0, 3, 0)
    assert _counts([(100, 130), (400, 430)], [(60, 900)]) == (2, 1, 0)


def test_match_detail():
    params = ScoringParams()
    ref = regularize(_events(3600, (100, 130), (400, 430)), params)
    hyp = regularize(_events(3600, (60, 900)), params)
    counts, detail = match_events(ref, hyp, params)
    assert detail.ref_detected == (True, True)
    assert detail.ref_hypotheses == ((0,), (1,))
    assert detail.hyp_supports_tp == (True, True, False)
    assert detail.hyp_false_positive == (False, False, True)
    assert counts.fp == sum(detail.hyp_false_positive)


def test_one_hypothesis_supports_several_references():
    assert _counts([(100, 110), (220, 230)], [(105, 225)]) == (2, 0, 0)


def test_preictal_tolerance_boundary():
    assert _counts([(100, 130)], [(60, 70)]) == (0, 1, 1)
    assert _counts([(100, 130)], [(60, 70.001)]) == (1, 0, 0)


def test_postictal_tolerance_boundary():
    assert _counts([(100, 130)], [(190, 200)]) == (0, 1, 1)
    assert _counts([(100, 130)], [(189.999, 200)]) == (1, 0, 0)


def test_minimal_overlap():
    params = ScoringParams(min_overlap_s=5)
    assert _counts([(100, 130)], [(185, 200)], params) == (0, 0, 1)
    assert _counts([(100, 130)], [(184.5, 200)], params) == (1, 0, 0)


def test_self_match_and_empty_hypothesis():
    rng = np.random.default_rng(14)
    for _ in range(50):
        duration, ref, _ = _random_instance(rng)
        events = _events(duration, *ref)
        counts = score_event_based(events, events, ScoringParams())
        assert (counts.tp, counts.fp, counts.fn) == (counts.ref_total, 0, 0)
        counts = score_event_based(events, EventList.empty(duration), ScoringParams())
        assert (counts.tp, counts.fp, counts.fn) == (0, 0, counts.ref_total)


def test_monotonicity():
    rng = np.random.default_rng(15)
    params = ScoringParams()
    wider = params.replace(preictal_tolerance_s=60, postictal_tolerance_s=120)
    for _ in range(200):
        duration, ref, hyp = _random_instance(rng)
        base = score_event_based(_events(duration, *ref), _events(duration, *hyp), params)
        tolerant = score_event_based(_events(duration, *ref), _events(duration, *hyp), wider)
        assert tolerant.tp >= base.tp
        assert tolerant.fp <= base.fp
        _, _, extra = _random_instance(rng)
        extra = [(on, off) for on, off in extra if off <= duration][:1]
        more = score_event_based(_events(duration, *ref), _events(duration, *hyp, *extra), params)
        assert more.tp >= base.tp


def test_duration_mismatch():
    with pytest.raises(ContractError):
        score_event_based(_events(100, (0, 10)), _events(200, (0, 10)), ScoringParams())
    with pytest.raises(ContractError):
        score_sample_based(_events(100, (0, 10)), _events(200, (0, 10)), ScoringParams())


def test_sample_examples():
    params = ScoringParams()
    counts = score_sample_based(_events(60, (0, 10)), _events(60, (0, 10)), params)
    assert (counts.tp, counts.fp, counts.fn) == (10, 0, 0)
    counts = score_sample_based(_events(60, (0, 10)), _events(60, (5, 15)), params)
    assert (counts.tp, counts.fp, counts.fn) == (5, 5, 5)


def _loop_counts(duration, ref, hyp, period):
    def positive(intervals, i):
        return any(on < (i + 1) * period and off > i * period for on, off in intervals)

    tp = fp = fn = 0
    for i in range(math.ceil(duration / period)):
        r, h = positive(ref, i), positive(hyp, i)
        tp += r and h
        fp += h and not r
        fn += r and not h
    return tp, fp, fn


def test_sample_scoring_matches_loop():
    rng = np.random.default_rng(16)
    for period in (1.0, 0.5, 2.0):
        params = ScoringParams(sample_period_s=period)
        for _ in range(40):
            n = int(rng.integers(40, 2400))
            intervals = []
            for _ in range(2):
                events = []
                for _ in range(int(rng.integers(0, 6))):
                    length = min(int(rng.integers(1, 400)), n)
                    onset = int(rng.integers(0, n - length + 1))
                    events.append((onset * GRID, (onset + length) * GRID))
                intervals.append(events)
            duration = n * GRID
            counts = score_sample_based(
                _events(duration, *intervals[0]), _events(duration, *intervals[1]), params
            )
            assert (counts.tp, counts.fp, counts.fn) == _loop_counts(
                duration, intervals[0], intervals[1], period
            )


def test_counts_invariants():
    with pytest.raises(ContractError):
        Counts(tp=1, fn=1, ref_total=3)
    with pytest.raises(ContractError):
        Counts(fp=2, hyp_total=1)
    total = Counts(1, 0, 0, 1, 1, 10.0) + Counts(0, 1, 1, 1, 1, 20.0)
    assert total == Counts(1, 1, 1, 2, 2, 30.0)


def test_metric_examples():
    metrics = compute_metrics(Counts(tp=1, fp=1, fn=1, ref_total=2, hyp_total=2, duration_s=86400))
    assert (metrics.sensitivity, metrics.precision, metrics.f1, metrics.fp_per_day) == (
        0.5,
        0.5,
        0.5,
        1.0,
    )
    metrics = compute_metrics(Counts(tp=0, fp=0, fn=5, ref_total=5, hyp_total=0, duration_s=86400))
    assert metrics.sensitivity == 0
    assert metrics.precision is None
    assert metrics.f1 is None
    assert metrics.fp_per_day == 0
    metrics = compute_metrics(Counts(tp=333, fp=407, fn=567, ref_total=900, hyp_total=740, duration_s=1))
    assert metrics.sensitivity == pytest.approx(0.37)
    assert metrics.precision == pytest.approx(0.45)
    assert metrics.f1 == pytest.approx(0.406, abs=5e-4)


def test_undefined_metrics():
    metrics = compute_metrics(Counts(tp=0, fp=3, fn=2, ref_total=2, hyp_total=3, duration_s=0))
    assert (metrics.sensitivity, metrics.precision) == (0, 0)
    assert metrics.f1 is None
    assert metrics.fp_per_day is None
    metrics = compute_metrics(Counts(tp=0, fp=1, fn=0, ref_total=0, hyp_total=1, duration_s=43200))
    assert metrics.sensitivity is None
    assert metrics.fp_per_day == 2.0


def test_harmonic_mean_identity():
    rng = np.random.default_rng(17)
    for _ in range(10_000):
        tp = int(rng.integers(1, 1000))
        fn = int(rng.integers(0, 1000))
        fp = int(rng.integers(0, 1000))
        metrics = compute_metrics(Counts(tp, fp, fn, tp + fn, tp + fp, 3600.0))
        expected = (1 / metrics.sensitivity + 1 / metrics.precision) / 2
        assert 1 / metrics.f1 == pytest.approx(expected, rel=1e-12)


def test_one_false_positive_per_day():
    metrics = compute_metrics(Counts(tp=0, fp=1, fn=0, ref_total=0, hyp_total=1, duration_s=86400))
    assert metrics.fp_per_day == 1.0
