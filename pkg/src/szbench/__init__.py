"""
SzBench benchmarks EEG seizure detection algorithms on a common footing:
recordings are standardized into one montage and sampling rate, detector
outputs are scored with fixed event-based rules, and algorithms are ranked
on a shared leaderboard.

.. code-block:: python

    from szbench import ScoringParams, index_dataset, load_references
    from szbench import evaluate_algorithm, rank

    index = index_dataset("./bids")
    references = load_references(index)
    params = ScoringParams()
    evaluation = evaluate_algorithm("mine", "./hypotheses", index, references, params)
    for entry in rank([evaluation.entry()]):
        print(entry.algorithm_name, entry.dataset_score.mean_metrics)

"""

# flake8: noqa F401
from .aggregate import (
    AgreementReport,
    AlgorithmEvaluation,
    DatasetScore,
    LeaderboardEntry,
    SubjectScore,
    agreement,
    evaluate_algorithm,
    load_references,
    rank,
    score_dataset,
    score_subject,
)
from .annotations import (
    DatasetIndex,
    Event,
    EventList,
    RecordingRef,
    index_dataset,
    read_events_tsv,
    validate_hypothesis_tree,
    write_events_tsv,
)
from .baseline import BaselineConfig, detect, detect_file
from .edf import EdfHeader, SignalMatrix, read_edf, read_edf_header, write_edf
from .errors import (
    AnnotationParseError,
    ConfigError,
    ContractError,
    DatasetIndexError,
    EdfParseError,
    StandardizationError,
    SzBenchError,
)
from .log_capture import JsonLogCapture, JsonLogHandler
from .runner import RunnerConfig, RunRecord, run_dataset
from .score import (
    Counts,
    Metrics,
    ScoringParams,
    compute_metrics,
    regularize,
    score_event_based,
    score_sample_based,
)
from .standardize import StandardizeConfig, standardize_dataset, standardize_recording

__all__ = [
    "AgreementReport",
    "AlgorithmEvaluation",
    "AnnotationParseError",
    "BaselineConfig",
    "ConfigError",
    "ContractError",
    "Counts",
    "DatasetIndex",
    "DatasetIndexError",
    "DatasetScore",
    "EdfHeader",
    "EdfParseError",
    "Event",
    "EventList",
    "JsonLogCapture",
    "JsonLogHandler",
    "LeaderboardEntry",
    "Metrics",
    "RecordingRef",
    "RunRecord",
    "RunnerConfig",
    "ScoringParams",
    "SignalMatrix",
    "StandardizationError",
    "StandardizeConfig",
    "SubjectScore",
    "SzBenchError",
    "agreement",
    "compute_metrics",
    "detect",
    "detect_file",
    "evaluate_algorithm",
    "index_dataset",
    "load_references",
    "rank",
    "read_edf",
    "read_edf_header",
    "read_events_tsv",
    "regularize",
    "run_dataset",
    "score_dataset",
    "score_event_based",
    "score_sample_based",
    "score_subject",
    "standardize_dataset",
    "standardize_recording",
    "validate_hypothesis_tree",
    "write_edf",
    "write_events_tsv",
]
