"""
Event-based and sample-based scoring of a hypothesis against a reference.

Event-based scoring first regularizes both lists (merge events separated by
less than ``merge_gap_s``, then split events longer than ``max_event_s``),
extends every reference event by the pre- and post-ictal tolerances and
then counts

- TP: reference events whose extended interval overlaps a hypothesis event
  by more than ``min_overlap_s``,
- FN: the remaining reference events,
- FP: hypothesis events that overlap no extended reference interval.

Sample-based scoring compares the raw lists on a grid of
``sample_period_s`` samples without tolerances.

All intervals are half-open ``[onset, onset + duration)`` in seconds.
"""
import dataclasses
import math
import typing

import numpy as np

from .annotations import Event, EventList
from .errors import ContractError
from .fingerprint import fingerprint

SECONDS_PER_DAY = 86400.0
# Relative slack when counting split fragments.
SPLIT_TOLERANCE = 1e-9


@dataclasses.dataclass(frozen=True)
class ScoringParams:
    """
    Event scoring parameters. The defaults are the ones used for ranking:
    30 s pre-ictal and 60 s post-ictal tolerance, merging of events less
    than 90 s apart, splitting of events longer than 5 min and
    any positive overlap counting as a detection.
    """

    min_overlap_s: float = 0.0
    preictal_tolerance_s: float = 30.0
    postictal_tolerance_s: float = 60.0
    merge_gap_s: float = 90.0
    max_event_s: float = 300.0
    sample_period_s: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                msg = f"Scoring parameter {f.name} must be a number, got {value!r}."
                raise ContractError(msg)
            if not math.isfinite(value) or value < 0:
                msg = f"Scoring parameter {f.name} must be finite and non-negative, got {value}."
                raise ContractError(msg)
        if self.max_event_s <= 0:
            msg = "max_event_s must be positive."
            raise ContractError(msg)
        if self.sample_period_s <= 0:
            msg = "sample_period_s must be positive."
            raise ContractError(msg)

    def to_dict(self) -> typing.Dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, data: typing.Mapping[str, typing.Any]) -> "ScoringParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            msg = f"Unknown scoring parameters: {', '.join(unknown)}."
            raise ContractError(msg)
        return cls(**{k: float(v) for k, v in data.items()})

    def replace(self, **changes) -> "ScoringParams":
        return dataclasses.replace(
            self, **{k: float(v) for k, v in changes.items() if v is not None}
        )

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())

    def describe(self) -> str:
        return " ".join(f"{k}={v:g}" for k, v in self.to_dict().items())


@dataclasses.dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ref_total: int = 0
    hyp_total: int = 0
    duration_s: float = 0.0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.ref_total, self.hyp_total) < 0:
            msg = f"Counts must not be negative: {self}."
            raise ContractError(msg)
        if self.tp + self.fn != self.ref_total or self.fp > self.hyp_total:
            msg = f"Inconsistent counts: {self}."
            raise ContractError(msg)

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            ref_total=self.ref_total + other.ref_total,
            hyp_total=self.hyp_total + other.hyp_total,
            duration_s=self.duration_s + other.duration_s,
        )


@dataclasses.dataclass(frozen=True)
class Metrics:
    """
    ``None`` marks an undefined metric (e.g. precision without any
    hypothesis event). Undefined values are rendered blank.
    """

    sensitivity: typing.Optional[float] = None
    precision: typing.Optional[float] = None
    f1: typing.Optional[float] = None
    fp_per_day: typing.Optional[float] = None

    def to_dict(self) -> typing.Dict[str, typing.Optional[float]]:
        return dataclasses.asdict(self)


METRIC_NAMES = ("sensitivity", "precision", "f1", "fp_per_day")


@dataclasses.dataclass(frozen=True)
class MatchDetail:
    ref_detected: typing.Tuple[bool, ...] = ()
    ref_hypotheses: typing.Tuple[typing.Tuple[int, ...], ...] = ()
    hyp_supports_tp: typing.Tuple[bool, ...] = ()
    hyp_false_positive: typing.Tuple[bool, ...] = ()


def merge_events(events: EventList, merge_gap_s: float) -> EventList:
    """
    Merge consecutive events separated by less than ``merge_gap_s``.
    Overlapping and touching events are always merged.
    """
    merged: typing.List[Event] = []
    for event in events:
        if merged:
            last = merged[-1]
            gap = event.onset_s - last.end_s
            if gap <= 0 or gap < merge_gap_s:
                if event.end_s > last.end_s:
                    merged[-1] = Event.between(last.onset_s, event.end_s)
                continue
        merged.append(event)
    return EventList(events.recording_duration_s, tuple(merged))


def split_events(events: EventList, max_event_s: float) -> EventList:
    """
    Split events longer than ``max_event_s`` into back-to-back fragments of
    ``max_event_s``; the last fragment holds the remainder.
    """
    fragments: typing.List[Event] = []
    for event in events:
        # Count from the duration so that a decimal onset cannot leave a
        # zero-length remainder behind.
        n = math.ceil(event.duration_s / max_event_s - SPLIT_TOLERANCE)
        if n <= 1:
            fragments.append(event)
            continue
        end_s = event.end_s
        for i in range(n):
            start = event.onset_s + i * max_event_s
            stop = end_s if i == n - 1 else min(event.onset_s + (i + 1) * max_event_s, end_s)
            fragments.append(Event.between(start, stop))
    return EventList(events.recording_duration_s, tuple(fragments))


def regularize(events: EventList, params: ScoringParams) -> EventList:
    """
    Merge, then split. Applied identically to references and hypotheses.
    """
    merged = merge_events(events, params.merge_gap_s)
    split = split_events(merged, params.max_event_s)
    return dataclasses.replace(split, regularized=True)


def extend_reference(
    ref: EventList, params: ScoringParams
) -> typing.List[typing.Tuple[float, float]]:
    """
    Reference intervals widened by the tolerances and clipped to the
    recording. Only used for matching.
    """
    return [
        (
            max(0.0, e.onset_s - params.preictal_tolerance_s),
            min(ref.recording_duration_s, e.end_s + params.postictal_tolerance_s),
        )
        for e in ref
    ]


def _check_durations(ref: EventList, hyp: EventList) -> None:
    if not math.isclose(
        ref.recording_duration_s, hyp.recording_duration_s, rel_tol=1e-9, abs_tol=1e-9
    ):
        msg = (
            f"Reference ({ref.recording_duration_s} s) and hypothesis"
            f" ({hyp.recording_duration_s} s) cover different durations."
        )
        raise ContractError(msg)


def match_events(
    ref: EventList, hyp: EventList, params: ScoringParams
) -> typing.Tuple[Counts, MatchDetail]:
    """
    Match hypothesis events against the tolerance-extended reference.
    A hypothesis event may support several true positives; one that
    overlaps any extended reference is never a false positive.
    """
    _check_durations(ref, hyp)
    extended = extend_reference(ref, params)
    hyp_on = np.array([e.onset_s for e in hyp], dtype=np.float64)
    hyp_off = np.array([e.end_s for e in hyp], dtype=np.float64)
    touches_reference = np.zeros(len(hyp), dtype=bool)
    supports_tp = np.zeros(len(hyp), dtype=bool)
    detected = []
    matched = []
    for start, end in extended:
        overlap = np.minimum(hyp_off, end) - np.maximum(hyp_on, start)
        touches_reference |= overlap > 0
        hits = (overlap > 0) & (overlap > params.min_overlap_s)
        supports_tp |= hits
        detected.append(bool(hits.any()))
        matched.append(tuple(int(j) for j in np.flatnonzero(hits)))
    tp = sum(detected)
    false_positive = ~touches_reference
    counts = Counts(
        tp=tp,
        fp=int(false_positive.sum()),
        fn=len(ref) - tp,
        ref_total=len(ref),
        hyp_total=len(hyp),
        duration_s=ref.recording_duration_s,
    )
    detail = MatchDetail(
        ref_detected=tuple(detected),
        ref_hypotheses=tuple(matched),
        hyp_supports_tp=tuple(bool(x) for x in supports_tp),
        hyp_false_positive=tuple(bool(x) for x in false_positive),
    )
    return counts, detail


def score_event_based(ref: EventList, hyp: EventList, params: ScoringParams) -> Counts:
    counts, _ = match_events(regularize(ref, params), regularize(hyp, params), params)
    return counts


def _sample_mask(events: EventList, n_samples: int, period: float) -> np.ndarray:
    mask = np.zeros(n_samples, dtype=bool)
    for event in events:
        first = math.floor(event.onset_s / period + 1e-9)
        stop = math.ceil(event.end_s / period - 1e-9)
        mask[max(first, 0) : min(stop, n_samples)] = True
    return mask


def score_sample_based(ref: EventList, hyp: EventList, params: ScoringParams) -> Counts:
    """
    Count samples of ``sample_period_s`` on the raw lists. A sample is
    positive if its interval intersects an event.
    """
    _check_durations(ref, hyp)
    period = params.sample_period_s
    n_samples = max(math.ceil(ref.recording_duration_s / period - 1e-9), 0)
    ref_mask = _sample_mask(ref, n_samples, period)
    hyp_mask = _sample_mask(hyp, n_samples, period)
    return Counts(
        tp=int(np.sum(ref_mask & hyp_mask)),
        fp=int(np.sum(~ref_mask & hyp_mask)),
        fn=int(np.sum(ref_mask & ~hyp_mask)),
        ref_total=int(ref_mask.sum()),
        hyp_total=int(hyp_mask.sum()),
        duration_s=ref.recording_duration_s,
    )


def score_recording(
    ref: EventList, hyp: EventList, params: ScoringParams
) -> typing.Tuple[Counts, Counts]:
    """
    Event-based and sample-based counts of one recording.
    """
    return score_event_based(ref, hyp, params), score_sample_based(ref, hyp, params)


def compute_metrics(counts: Counts) -> Metrics:
    sensitivity = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else None
    if sensitivity is None or precision is None or sensitivity + precision == 0:
        f1 = None
    else:
        f1 = 2 * sensitivity * precision / (sensitivity + precision)
    fp_per_day = (
        counts.fp * SECONDS_PER_DAY / counts.duration_s if counts.duration_s > 0 else None
    )
    return Metrics(sensitivity, precision, f1, fp_per_day)
