"""
Tables and files produced from scores: leaderboards, per-subject
breakdowns, agreement analysis, plot data and the structured
``scores.json`` report. All tables are pandas DataFrames; undefined metrics
are NaN in tables and blank in CSV files.
"""
import dataclasses
import logging
import math
import typing
from pathlib import Path

import pandas as pd

from .aggregate import (
    AgreementReport,
    AlgorithmEvaluation,
    DatasetScore,
    LeaderboardEntry,
    SubjectScore,
)
from .db.json_serializer import to_json, to_json_str
from .errors import ContractError
from .fingerprint import short_fingerprint
from .score import Counts, Metrics, ScoringParams

_log = logging.getLogger("SzBench.report")

SCHEMA = "szbench-scores/1"
CSV_FLOAT_FORMAT = "%.6f"
NOT_AVAILABLE = "n/a"


@dataclasses.dataclass(frozen=True)
class ReportOptions:
    """
    :param precision: Decimals of percentages in Markdown tables. False
        positives per day are shown with one decimal more.
    """

    precision: int = 1

    def __post_init__(self):
        if not 0 <= self.precision <= 10:
            msg = f"precision must lie in [0, 10], got {self.precision}."
            raise ContractError(msg)


def _rows_to_frame(
    rows: typing.Iterable[typing.Dict[str, typing.Any]], columns: typing.Sequence[str]
) -> pd.DataFrame:
    data: typing.Dict[str, list] = {column: [] for column in columns}
    for row in rows:
        for column in columns:
            value = row.get(column)
            data[column].append(math.nan if value is None else value)
    return pd.DataFrame(data=data, columns=list(columns))


LEADERBOARD_COLUMNS = (
    "rank",
    "algorithm",
    "f1",
    "sensitivity",
    "precision",
    "fp_per_day",
    "n_subjects",
    "n_subjects_f1",
)


def leaderboard_table(ranked: typing.Sequence[LeaderboardEntry]) -> pd.DataFrame:
    rows = []
    for position, entry in enumerate(ranked, start=1):
        score = entry.dataset_score
        rows.append(
            {
                "rank": position,
                "algorithm": entry.algorithm_name,
                **score.mean_metrics.to_dict(),
                "n_subjects": len(score.per_subject),
                "n_subjects_f1": score.n_subjects_defined.get("f1", 0),
            }
        )
    return _rows_to_frame(rows, LEADERBOARD_COLUMNS)


PER_SUBJECT_COLUMNS = (
    "algorithm",
    "subject",
    "tp",
    "fp",
    "fn",
    "duration_s",
    "sensitivity",
    "precision",
    "f1",
    "fp_per_day",
)


def per_subject_table(scores: typing.Sequence[typing.Tuple[str, DatasetScore]]) -> pd.DataFrame:
    rows = []
    for name, score in scores:
        for subject in score.per_subject:
            rows.append(
                {
                    "algorithm": name,
                    "subject": subject.subject_id,
                    "tp": subject.counts.tp,
                    "fp": subject.counts.fp,
                    "fn": subject.counts.fn,
                    "duration_s": float(subject.counts.duration_s),
                    **subject.metrics.to_dict(),
                }
            )
    return _rows_to_frame(rows, PER_SUBJECT_COLUMNS)


AGREEMENT_COLUMNS = (
    "kind",
    "subject",
    "session",
    "run",
    "onset_s",
    "end_s",
    "n_events",
    "n_algorithms",
    "fraction",
    "algorithms",
)


def agreement_table(report: AgreementReport) -> pd.DataFrame:
    """
    One row per reference event (``kind=reference``) and per cluster of
    false positives (``kind=false_positive``).
    """
    rows = []
    for ref in report.reference_events:
        subject, session, run = ref.recording
        rows.append(
            {
                "kind": "reference",
                "subject": subject,
                "session": session,
                "run": run,
                "onset_s": ref.onset_s,
                "end_s": ref.onset_s + ref.duration_s,
                "n_events": 1,
                "n_algorithms": len(ref.algorithms),
                "fraction": ref.fraction,
                "algorithms": ";".join(ref.algorithms),
            }
        )
    for cluster in report.fp_clusters:
        subject, session, run = cluster.recording
        rows.append(
            {
                "kind": "false_positive",
                "subject": subject,
                "session": session,
                "run": run,
                "onset_s": cluster.onset_s,
                "end_s": cluster.end_s,
                "n_events": cluster.n_events,
                "n_algorithms": len(cluster.algorithms),
                "fraction": cluster.fraction,
                "algorithms": ";".join(cluster.algorithms),
            }
        )
    return _rows_to_frame(rows, AGREEMENT_COLUMNS)


def scatter_table(ranked: typing.Sequence[LeaderboardEntry]) -> pd.DataFrame:
    """
    Sensitivity against precision per algorithm, for iso-F1 plots.
    """
    rows = [
        {
            "algorithm": e.algorithm_name,
            "sensitivity": e.dataset_score.mean_metrics.sensitivity,
            "precision": e.dataset_score.mean_metrics.precision,
            "f1": e.dataset_score.mean_metrics.f1,
        }
        for e in ranked
    ]
    return _rows_to_frame(rows, ("algorithm", "sensitivity", "precision", "f1"))


def read_self_reported(path: typing.Union[str, Path]) -> typing.Dict[str, typing.Optional[float]]:
    """
    Read a CSV with the columns ``algorithm`` and ``self_reported_f1``
    (a fraction; blank when unknown).
    """
    table = pd.read_csv(path, dtype=str, keep_default_na=False, comment="#")
    missing = [c for c in ("algorithm", "self_reported_f1") if c not in table.columns]
    if missing:
        msg = f"{path}: missing columns {', '.join(missing)}."
        raise ContractError(msg)
    values: typing.Dict[str, typing.Optional[float]] = {}
    for i, row in enumerate(table.to_dict("records"), start=2):
        text = row["self_reported_f1"].strip()
        if not text or text.lower() == NOT_AVAILABLE:
            values[row["algorithm"].strip()] = None
            continue
        try:
            value = float(text)
        except ValueError as e:
            msg = f"{path}:{i}: self_reported_f1 {text!r} is not a number."
            raise ContractError(msg) from e
        if not 0 <= value <= 1:
            msg = f"{path}:{i}: self_reported_f1 must be a fraction in [0, 1], got {value}."
            raise ContractError(msg)
        values[row["algorithm"].strip()] = value
    return values


def self_reported_table(
    ranked: typing.Sequence[LeaderboardEntry],
    self_reported: typing.Mapping[str, typing.Optional[float]],
) -> pd.DataFrame:
    """
    Measured against self-reported F1. ``difference`` is measured minus
    self-reported, ``n/a`` if either is unknown. Self-reported names without
    a scored algorithm are skipped with a warning.
    """
    names = {e.algorithm_name for e in ranked}
    for unknown in sorted(set(self_reported) - names):
        _log.warning(f"Self-reported algorithm {unknown!r} was not scored; skipping it.")
    rows = []
    for entry in ranked:
        if entry.algorithm_name not in self_reported:
            continue
        measured = entry.dataset_score.mean_metrics.f1
        reported = self_reported[entry.algorithm_name]
        difference = (
            CSV_FLOAT_FORMAT % (measured - reported)
            if measured is not None and reported is not None
            else NOT_AVAILABLE
        )
        rows.append(
            {
                "algorithm": entry.algorithm_name,
                "measured_f1": measured,
                "self_reported_f1": reported,
                "difference": difference,
            }
        )
    return _rows_to_frame(rows, ("algorithm", "measured_f1", "self_reported_f1", "difference"))


def params_line(params: ScoringParams) -> str:
    return f"scoring: {params.describe()} (fingerprint {short_fingerprint(params.to_dict())})"


def write_csv(table: pd.DataFrame, path: typing.Union[str, Path], header: str) -> Path:
    """
    Write ``table`` with one leading ``# header`` comment line, fixed float
    format and blank cells for undefined values.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(f"# {header}\n")
        table.to_csv(f, index=False, lineterminator="\n", float_format=CSV_FLOAT_FORMAT, na_rep="")
    return path


def _percent(value, decimals: int) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{100 * value:.{decimals}f}"


def _rate(value, decimals: int) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.{decimals}f}"


def render_markdown(
    ranked: typing.Sequence[LeaderboardEntry],
    params: ScoringParams,
    options: typing.Optional[ReportOptions] = None,
    comparison: typing.Optional[pd.DataFrame] = None,
) -> str:
    """
    Leaderboard as Markdown: algorithm, F1, sensitivity and precision in
    percent, false positives per 24 h. Undefined values stay blank.
    """
    options = options or ReportOptions()
    p = options.precision
    rows = [
        {
            "Algorithm": e.algorithm_name,
            "F1 [%]": _percent(e.dataset_score.mean_metrics.f1, p),
            "Sensitivity [%]": _percent(e.dataset_score.mean_metrics.sensitivity, p),
            "Precision [%]": _percent(e.dataset_score.mean_metrics.precision, p),
            "FP/24h": _rate(e.dataset_score.mean_metrics.fp_per_day, p + 1),
        }
        for e in ranked
    ]
    table = pd.DataFrame(rows, columns=["Algorithm", "F1 [%]", "Sensitivity [%]", "Precision [%]", "FP/24h"])
    parts = [params_line(params), "", "## Leaderboard", "", table.to_markdown(index=False, disable_numparse=True)]
    if comparison is not None and len(comparison):
        shown = pd.DataFrame(
            {
                "Algorithm": comparison["algorithm"],
                "Measured F1 [%]": [_percent(v, p) for v in comparison["measured_f1"]],
                "Self-reported F1 [%]": [_percent(v, p) for v in comparison["self_reported_f1"]],
                "Difference [%]": [
                    NOT_AVAILABLE if d == NOT_AVAILABLE else _percent(float(d), p)
                    for d in comparison["difference"]
                ],
            }
        )
        parts += ["", "## Self-reported F1", "", shown.to_markdown(index=False, disable_numparse=True)]
    return "\n".join(parts) + "\n"


def dataset_score_from_json(data: typing.Mapping[str, typing.Any]) -> DatasetScore:
    subjects = tuple(
        SubjectScore(s["subject_id"], Counts(**s["counts"]), Metrics(**s["metrics"]))
        for s in data["per_subject"]
    )
    return DatasetScore(subjects, Metrics(**data["mean_metrics"]), dict(data["n_subjects_defined"]))


def build_score_report(
    params: ScoringParams,
    dataset_root: Path,
    ranked: typing.Sequence[LeaderboardEntry],
    evaluations: typing.Mapping[str, AlgorithmEvaluation],
    agreement_report: typing.Optional[AgreementReport] = None,
    environment: typing.Optional[dict] = None,
    logging_entries: typing.Optional[list] = None,
) -> dict:
    algorithms = []
    for entry in ranked:
        evaluation = evaluations[entry.algorithm_name]
        algorithms.append(
            {
                "name": entry.algorithm_name,
                "hyp_root": evaluation.hyp_root,
                "event": evaluation.event_score,
                "sample": evaluation.sample_score,
                "findings": [
                    {
                        "recording": c.recording.stem,
                        "path": c.path,
                        "status": c.status,
                        "message": c.message,
                        "line": c.line,
                    }
                    for c in evaluation.validation.findings
                ],
            }
        )
    return to_json(
        {
            "schema": SCHEMA,
            "params": params.to_dict(),
            "params_fingerprint": params.fingerprint(),
            "dataset": dataset_root,
            "n_recordings": len(next(iter(evaluations.values())).recordings) if evaluations else 0,
            "algorithms": algorithms,
            "agreement": agreement_report,
            "environment": environment,
            "logging": logging_entries or [],
        }
    )


def write_json(data, path: typing.Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json_str(data, indent=2) + "\n", encoding="utf-8")
    return path


def entries_from_report(
    report: typing.Mapping[str, typing.Any],
) -> typing.Tuple[ScoringParams, typing.List[LeaderboardEntry]]:
    """
    Scoring parameters and leaderboard entries of a ``scores.json``.
    """
    if report.get("schema") != SCHEMA:
        msg = f"Not a score report (schema {report.get('schema')!r}, expected {SCHEMA!r})."
        raise ContractError(msg)
    params = ScoringParams.from_dict(report["params"])
    entries = [
        LeaderboardEntry(a["name"], dataset_score_from_json(a["event"])) for a in report["algorithms"]
    ]
    return params, entries


def write_leaderboard_files(
    out_dir: Path,
    ranked: typing.Sequence[LeaderboardEntry],
    params: ScoringParams,
    options: ReportOptions,
    self_reported: typing.Optional[typing.Mapping[str, typing.Optional[float]]] = None,
    formats: typing.Collection[str] = ("csv", "markdown"),
) -> typing.List[Path]:
    """
    ``scatter.csv`` and, with self-reported values, ``self_reported.csv``
    (format ``csv``); ``leaderboard.md`` (format ``markdown``).
    """
    header = params_line(params)
    comparison = self_reported_table(ranked, self_reported) if self_reported else None
    written = []
    if "csv" in formats:
        written.append(write_csv(scatter_table(ranked), out_dir / "scatter.csv", header))
        if comparison is not None:
            written.append(write_csv(comparison, out_dir / "self_reported.csv", header))
    if "markdown" in formats:
        out_dir.mkdir(parents=True, exist_ok=True)
        markdown = out_dir / "leaderboard.md"
        markdown.write_text(render_markdown(ranked, params, options, comparison), encoding="utf-8")
        written.append(markdown)
    return written
