"""
From per-recording counts to leaderboards.

Counts are summed over the recordings of a subject before the metrics are
computed; the dataset score is the arithmetic mean of the subject metrics,
each metric averaged over the subjects for which it is defined.
"""
import dataclasses
import logging
import math
import typing
from pathlib import Path

from .annotations import (
    DatasetIndex,
    EventList,
    HypothesisCheck,
    RecordingKey,
    ValidationReport,
    check_hypothesis,
    read_reference,
)
from .errors import ContractError
from .score import (
    METRIC_NAMES,
    Counts,
    Metrics,
    ScoringParams,
    compute_metrics,
    match_events,
    regularize,
    score_event_based,
    score_recording,
)
from .utils import Timer, UnionFind, in_parallel

_log = logging.getLogger("SzBench.aggregate")


@dataclasses.dataclass(frozen=True)
class SubjectScore:
    subject_id: str
    counts: Counts
    metrics: Metrics


@dataclasses.dataclass(frozen=True)
class DatasetScore:
    per_subject: typing.Tuple[SubjectScore, ...]
    mean_metrics: Metrics
    n_subjects_defined: typing.Mapping[str, int]


@dataclasses.dataclass(frozen=True)
class LeaderboardEntry:
    algorithm_name: str
    dataset_score: DatasetScore
    self_reported_f1: typing.Optional[float] = None


def subject_from_counts(subject_id: str, counts: typing.Sequence[Counts]) -> SubjectScore:
    """
    Sum the counts of all recordings of a subject, then compute metrics once.
    """
    if not counts:
        msg = f"Subject {subject_id!r} has no recordings."
        raise ContractError(msg)
    total = Counts()
    for c in counts:
        total = total + c
    return SubjectScore(subject_id, total, compute_metrics(total))


def score_subject(
    recordings: typing.Sequence[typing.Tuple[EventList, EventList]],
    params: ScoringParams,
    subject_id: str = "",
) -> SubjectScore:
    """
    Event-based score of one subject from its (reference, hypothesis) pairs.
    """
    if not recordings:
        msg = f"Subject {subject_id!r} has no recordings."
        raise ContractError(msg)
    return subject_from_counts(
        subject_id, [score_event_based(ref, hyp, params) for ref, hyp in recordings]
    )


def score_dataset(subjects: typing.Sequence[SubjectScore]) -> DatasetScore:
    if not subjects:
        msg = "Cannot score a dataset without subjects."
        raise ContractError(msg)
    ordered = tuple(sorted(subjects, key=lambda s: s.subject_id))
    means: typing.Dict[str, typing.Optional[float]] = {}
    defined: typing.Dict[str, int] = {}
    for name in METRIC_NAMES:
        values = [getattr(s.metrics, name) for s in ordered]
        values = [v for v in values if v is not None]
        defined[name] = len(values)
        # fsum keeps the mean independent of the subject order
        means[name] = math.fsum(values) / len(values) if values else None
    return DatasetScore(ordered, Metrics(**means), defined)


def _rank_key(entry: LeaderboardEntry):
    metrics = entry.dataset_score.mean_metrics
    f1 = metrics.f1
    fp_per_day = metrics.fp_per_day if metrics.fp_per_day is not None else math.inf
    return (f1 is None, -(f1 or 0.0), fp_per_day, entry.algorithm_name)


def rank(entries: typing.Sequence[LeaderboardEntry]) -> typing.List[LeaderboardEntry]:
    """
    Order by F1 (descending, undefined last), then false positives per day
    (ascending), then name.
    """
    if not entries:
        msg = "Cannot rank an empty leaderboard."
        raise ContractError(msg)
    names = [e.algorithm_name for e in entries]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        msg = f"Duplicate algorithm names: {', '.join(duplicates)}."
        raise ContractError(msg)
    return sorted(entries, key=_rank_key)


@dataclasses.dataclass(frozen=True)
class ReferenceAgreement:
    recording: RecordingKey
    onset_s: float
    duration_s: float
    algorithms: typing.Tuple[str, ...]
    fraction: float


@dataclasses.dataclass(frozen=True)
class FalsePositiveCluster:
    recording: RecordingKey
    onset_s: float
    end_s: float
    algorithms: typing.Tuple[str, ...]
    n_events: int
    fraction: float


@dataclasses.dataclass(frozen=True)
class AgreementReport:
    algorithms: typing.Tuple[str, ...]
    reference_events: typing.Tuple[ReferenceAgreement, ...] = ()
    fp_clusters: typing.Tuple[FalsePositiveCluster, ...] = ()


def _cluster_false_positives(
    recording: RecordingKey,
    pooled: typing.List[typing.Tuple[str, float, float]],
    n_algorithms: int,
) -> typing.List[FalsePositiveCluster]:
    pooled = sorted(pooled, key=lambda p: (p[1], p[2], p[0]))
    uf = UnionFind()
    for i, (_, _, end_i) in enumerate(pooled):
        uf.add(i)
        for j in range(i + 1, len(pooled)):
            if pooled[j][1] >= end_i:
                break
            uf.union(i, j)
    clusters = []
    for members in uf.groups():
        events = [pooled[m] for m in members]
        algorithms = tuple(sorted({e[0] for e in events}))
        clusters.append(
            FalsePositiveCluster(
                recording=recording,
                onset_s=min(e[1] for e in events),
                end_s=max(e[2] for e in events),
                algorithms=algorithms,
                n_events=len(events),
                fraction=len(algorithms) / n_algorithms,
            )
        )
    return sorted(clusters, key=lambda c: (c.onset_s, c.end_s))


def agreement(
    references: typing.Mapping[RecordingKey, EventList],
    hypotheses: typing.Mapping[str, typing.Mapping[RecordingKey, EventList]],
    params: ScoringParams,
) -> AgreementReport:
    """
    How many algorithms detect each reference event, and how the false
    positives of all algorithms cluster. False positives of a recording
    are pooled and grouped by transitive overlap (no tolerances). A
    recording missing from an algorithm's hypotheses counts as empty.
    """
    if len(hypotheses) < 2:
        msg = f"Agreement needs at least two algorithms, got {len(hypotheses)}."
        raise ContractError(msg)
    algorithms = tuple(sorted(hypotheses))
    n = len(algorithms)
    reference_events = []
    clusters = []
    for key in sorted(references):
        ref = regularize(references[key], params)
        detected_by: typing.List[typing.List[str]] = [[] for _ in ref.events]
        pooled: typing.List[typing.Tuple[str, float, float]] = []
        for name in algorithms:
            raw = hypotheses[name].get(key, EventList.empty(ref.recording_duration_s))
            hyp = regularize(raw, params)
            _, detail = match_events(ref, hyp, params)
            for i, hit in enumerate(detail.ref_detected):
                if hit:
                    detected_by[i].append(name)
            pooled.extend(
                (name, e.onset_s, e.end_s)
                for e, is_fp in zip(hyp.events, detail.hyp_false_positive)
                if is_fp
            )
        reference_events.extend(
            ReferenceAgreement(key, e.onset_s, e.duration_s, tuple(names), len(names) / n)
            for e, names in zip(ref.events, detected_by)
        )
        clusters.extend(_cluster_false_positives(key, pooled, n))
    return AgreementReport(algorithms, tuple(reference_events), tuple(clusters))


def load_references(index: DatasetIndex) -> typing.Dict[RecordingKey, EventList]:
    """
    Reference events of every indexed recording.

    :raises AnnotationParseError: if a reference annotation is malformed.
    """
    return {recording.key: read_reference(recording) for recording in index}


@dataclasses.dataclass(frozen=True)
class RecordingScore:
    recording: RecordingKey
    event_counts: Counts
    sample_counts: Counts
    hypothesis: HypothesisCheck


@dataclasses.dataclass(frozen=True)
class AlgorithmEvaluation:
    name: str
    hyp_root: Path
    event_score: DatasetScore
    sample_score: DatasetScore
    recordings: typing.Tuple[RecordingScore, ...]
    validation: ValidationReport
    hypotheses: typing.Mapping[RecordingKey, EventList]

    def entry(self, self_reported_f1: typing.Optional[float] = None) -> LeaderboardEntry:
        return LeaderboardEntry(self.name, self.event_score, self_reported_f1)


def evaluate_algorithm(
    name: str,
    hyp_root: typing.Union[str, Path],
    index: DatasetIndex,
    references: typing.Mapping[RecordingKey, EventList],
    params: ScoringParams,
    jobs: int = 1,
) -> AlgorithmEvaluation:
    """
    Score one hypothesis tree against the indexed references, event- and
    sample-based. Missing or unparsable hypothesis files count as empty.
    """
    if not len(index):
        msg = "Cannot evaluate an algorithm on an empty dataset."
        raise ContractError(msg)
    timer = Timer()

    def score_one(recording):
        check, hyp = check_hypothesis(hyp_root, recording)
        event_counts, sample_counts = score_recording(references[recording.key], hyp, params)
        return RecordingScore(recording.key, event_counts, sample_counts, check), hyp

    results = in_parallel(score_one, list(index), jobs)
    recordings = tuple(r for r, _ in results)
    by_subject: typing.Dict[str, typing.List[RecordingScore]] = {}
    for score in recordings:
        by_subject.setdefault(score.recording[0], []).append(score)
    event_score = score_dataset(
        [subject_from_counts(s, [r.event_counts for r in rs]) for s, rs in by_subject.items()]
    )
    sample_score = score_dataset(
        [subject_from_counts(s, [r.sample_counts for r in rs]) for s, rs in by_subject.items()]
    )
    checks = tuple(r.hypothesis for r in recordings)
    validation = ValidationReport(checks, index.errors)
    if validation.findings:
        _log.warning(
            f"{name}: {len(validation.findings)} of {len(checks)} hypothesis files"
            " are missing or unparsable and count as empty."
        )
    _log.info(f"Scored {name} on {len(checks)} recordings in {timer.time():.2f} s.")
    return AlgorithmEvaluation(
        name=name,
        hyp_root=Path(hyp_root),
        event_score=event_score,
        sample_score=sample_score,
        recordings=recordings,
        validation=validation,
        hypotheses={score.recording: hyp for score, hyp in results},
    )
