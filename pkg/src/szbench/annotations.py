"""
Seizure annotations and the BIDS dataset layout.

Annotations are tab-separated files with one row per event. Only rows whose
``eventType`` starts with ``sz`` are seizures; background rows (``bckg``)
are ignored. A recording in the dataset is an EDF file following

``sub-<s>/ses-<s>/eeg/sub-<s>_ses-<s>_task-<task>_run-<r>_eeg.edf``

with its reference annotations in the sibling ``..._events.tsv``.
Hypothesis trees produced by detectors mirror this layout.
"""
import dataclasses
import io
import logging
import math
import re
import typing
from pathlib import Path

import pandas as pd

from .edf import read_edf_header, recording_duration
from .errors import AnnotationParseError, ContractError, DatasetIndexError, SzBenchError

_log = logging.getLogger("SzBench.annotations")

TSV_COLUMNS = (
    "onset",
    "duration",
    "eventType",
    "confidence",
    "channels",
    "dateTime",
    "recordingDuration",
)
REQUIRED_COLUMNS = ("onset", "duration", "eventType")
SEIZURE_PREFIX = "sz"
NOT_AVAILABLE = "n/a"
DEFAULT_TASK = "szMonitoring"

RecordingKey = typing.Tuple[str, str, str]


@dataclasses.dataclass(frozen=True, order=True)
class Event:
    """
    One seizure as the half-open interval ``[onset_s, onset_s + duration_s)``.
    """

    onset_s: float
    duration_s: float

    def __post_init__(self):
        if not (self.onset_s >= 0 and self.duration_s > 0):
            msg = f"Invalid event: onset {self.onset_s}, duration {self.duration_s}."
            raise ContractError(msg)

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s

    @classmethod
    def between(cls, start_s: float, end_s: float) -> "Event":
        return cls(start_s, end_s - start_s)


@dataclasses.dataclass(frozen=True)
class EventList:
    """
    The seizures of one recording. ``regularized`` marks lists that went
    through merging and splitting (see ``szbench.score.regularize``).
    """

    recording_duration_s: float
    events: typing.Tuple[Event, ...] = ()
    regularized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(sorted(self.events)))
        if self.recording_duration_s < 0:
            msg = f"Negative recording duration {self.recording_duration_s}."
            raise ContractError(msg)
        # tolerate float noise from onset + duration arithmetic
        limit = self.recording_duration_s + 1e-9 * max(1.0, self.recording_duration_s)
        for event in self.events:
            if event.end_s > limit:
                msg = (
                    f"Event [{event.onset_s}, {event.end_s}) exceeds the recording"
                    f" duration {self.recording_duration_s}."
                )
                raise ContractError(msg)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> typing.Iterator[Event]:
        return iter(self.events)

    @classmethod
    def empty(cls, recording_duration_s: float) -> "EventList":
        return cls(recording_duration_s)


@dataclasses.dataclass(frozen=True)
class RecordingRef:
    subject_id: str
    session_id: str
    run_id: str
    eeg_path: Path
    duration_s: float
    events_path: typing.Optional[Path] = None
    task: str = DEFAULT_TASK

    def __post_init__(self):
        if not (self.subject_id and self.session_id and self.run_id):
            msg = f"Recording identifiers must not be empty: {self.eeg_path}."
            raise ContractError(msg)
        if self.duration_s <= 0:
            msg = f"Recording {self.eeg_path} has no duration."
            raise ContractError(msg)

    @property
    def key(self) -> RecordingKey:
        return (self.subject_id, self.session_id, self.run_id)

    @property
    def stem(self) -> str:
        return bids_stem(self.subject_id, self.session_id, self.task, self.run_id)

    @property
    def relative_dir(self) -> Path:
        return Path(f"sub-{self.subject_id}", f"ses-{self.session_id}", "eeg")


@dataclasses.dataclass(frozen=True)
class IndexFinding:
    path: Path
    message: str


@dataclasses.dataclass(frozen=True)
class DatasetIndex:
    root: Path
    recordings: typing.Tuple[RecordingRef, ...] = ()
    errors: typing.Tuple[IndexFinding, ...] = ()

    def __len__(self) -> int:
        return len(self.recordings)

    def __iter__(self) -> typing.Iterator[RecordingRef]:
        return iter(self.recordings)

    @property
    def subjects(self) -> typing.List[str]:
        return sorted({r.subject_id for r in self.recordings})

    def by_subject(self) -> typing.Dict[str, typing.List[RecordingRef]]:
        grouped: typing.Dict[str, typing.List[RecordingRef]] = {}
        for recording in self.recordings:
            grouped.setdefault(recording.subject_id, []).append(recording)
        return grouped


def bids_stem(subject: str, session: str, task: str, run: str) -> str:
    return f"sub-{subject}_ses-{session}_task-{task}_run-{run}"


def _parse_number(text: str, name: str, path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        value = math.nan
    if not math.isfinite(value):
        msg = f"Column '{name}' is not a finite number: {text!r}."
        raise AnnotationParseError(msg, path, line)
    return value


def read_events_tsv(
    path: typing.Union[str, Path], recording_duration_s: float
) -> EventList:
    """
    Read the seizure events of one recording. Events reaching beyond the
    end of the recording are clipped (with a warning).

    :raises AnnotationParseError: on a missing header or malformed rows.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        msg = f"Not UTF-8 text: {e}"
        raise AnnotationParseError(msg, path) from e
    lines = text.splitlines()
    header = lines[0].split("\t") if lines else []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        msg = f"Missing header row (columns {', '.join(missing)} not found)."
        raise AnnotationParseError(msg, path, 1)
    try:
        table = pd.read_csv(
            io.StringIO(text),
            sep="\t",
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except (pd.errors.ParserError, ValueError) as e:
        msg = f"Malformed table: {e}"
        raise AnnotationParseError(msg, path) from e

    events = []
    clipped = 0
    for i, values in enumerate(table.to_dict("records")):
        line = i + 2
        event_type = str(values.get("eventType", "")).strip()
        if not event_type.startswith(SEIZURE_PREFIX):
            continue
        onset = _parse_number(str(values["onset"]), "onset", path, line)
        duration = _parse_number(str(values["duration"]), "duration", path, line)
        if onset < 0 or duration <= 0:
            msg = f"Invalid event with onset {onset} and duration {duration}."
            raise AnnotationParseError(msg, path, line)
        if onset + duration > recording_duration_s:
            clipped += 1
            if onset >= recording_duration_s:
                continue
            duration = recording_duration_s - onset
        events.append(Event(onset, duration))
    if clipped:
        _log.warning(
            f"{path}: clipped {clipped} events to the recording duration"
            f" of {recording_duration_s} s."
        )

    if "recordingDuration" in table.columns and len(table):
        stated = str(table["recordingDuration"].iloc[0]).strip()
        try:
            stated_value = float(stated)
        except ValueError:
            stated_value = None
        if stated_value is not None and abs(stated_value - recording_duration_s) > 1e-3:
            _log.warning(
                f"{path}: recordingDuration {stated_value} differs from the"
                f" EDF duration {recording_duration_s}; using the EDF duration."
            )
    return EventList(recording_duration_s, tuple(events))


def write_events_tsv(events: EventList, path: typing.Union[str, Path]) -> None:
    """
    Write the events with the seven-column header. Numbers are written in
    their shortest round-trip representation.
    """
    rows = [
        {
            "onset": repr(float(e.onset_s)),
            "duration": repr(float(e.duration_s)),
            "eventType": SEIZURE_PREFIX,
            "confidence": NOT_AVAILABLE,
            "channels": NOT_AVAILABLE,
            "dateTime": NOT_AVAILABLE,
            "recordingDuration": repr(float(events.recording_duration_s)),
        }
        for e in events
    ]
    table = pd.DataFrame(rows, columns=list(TSV_COLUMNS))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, sep="\t", index=False, lineterminator="\n")


_EEG_RE = re.compile(
    r"sub-(?P<subject>[^_/]+)_ses-(?P<session>[^_/]+)_task-(?P<task>[^_/]+)_run-(?P<run>[^_/]+)_eeg\.edf"
)


def index_dataset(
    root: typing.Union[str, Path], task: str = DEFAULT_TASK
) -> DatasetIndex:
    """
    Collect all recordings of a BIDS tree, sorted by subject, session and
    run. Files whose EDF header cannot be read are reported in
    ``DatasetIndex.errors`` and skipped.

    :raises DatasetIndexError: if a (subject, session, run) appears twice.
    """
    root = Path(root)
    if not root.is_dir():
        msg = f"Dataset root {root} is not a directory."
        raise DatasetIndexError(msg)
    pattern = f"sub-*/ses-*/eeg/sub-*_ses-*_task-{task}_run-*_eeg.edf"
    recordings: typing.Dict[RecordingKey, RecordingRef] = {}
    errors = []
    for eeg_path in sorted(root.glob(pattern)):
        match = _EEG_RE.fullmatch(eeg_path.name)
        if not match:
            errors.append(IndexFinding(eeg_path, "File name does not follow the BIDS pattern."))
            continue
        try:
            duration = recording_duration(read_edf_header(eeg_path))
        except (SzBenchError, OSError) as e:
            _log.warning(f"Skipping {eeg_path}: {e}")
            errors.append(IndexFinding(eeg_path, str(e)))
            continue
        events_path = eeg_path.with_name(eeg_path.name[: -len("_eeg.edf")] + "_events.tsv")
        try:
            recording = RecordingRef(
                subject_id=match["subject"],
                session_id=match["session"],
                run_id=match["run"],
                eeg_path=eeg_path,
                duration_s=duration,
                events_path=events_path if events_path.is_file() else None,
                task=task,
            )
        except ContractError as e:
            errors.append(IndexFinding(eeg_path, str(e)))
            continue
        if recording.key in recordings:
            msg = f"Recording {recording.key} appears twice: {recordings[recording.key].eeg_path} and {eeg_path}."
            raise DatasetIndexError(msg)
        recordings[recording.key] = recording
    ordered = tuple(recordings[key] for key in sorted(recordings))
    _log.info(f"Indexed {len(ordered)} recordings in {root} ({len(errors)} errors).")
    return DatasetIndex(root, ordered, tuple(errors))


def read_reference(recording: RecordingRef) -> EventList:
    """
    Reference events of a recording; a recording without annotation file
    is background only.
    """
    if recording.events_path is None:
        return EventList.empty(recording.duration_s)
    return read_events_tsv(recording.events_path, recording.duration_s)


def hypothesis_path(hyp_root: typing.Union[str, Path], recording: RecordingRef) -> Path:
    """
    Location of the detector output for ``recording`` in a hypothesis tree.
    """
    return Path(hyp_root) / recording.relative_dir / f"{recording.stem}_events.tsv"


class HypothesisStatus:
    FOUND = "found"
    MISSING = "missing"
    UNPARSABLE = "unparsable"


@dataclasses.dataclass(frozen=True)
class HypothesisCheck:
    recording: RecordingRef
    path: Path
    status: str
    message: str = ""
    line: int = 0


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    checks: typing.Tuple[HypothesisCheck, ...] = ()
    index_errors: typing.Tuple[IndexFinding, ...] = ()

    @property
    def findings(self) -> typing.List[HypothesisCheck]:
        return [c for c in self.checks if c.status != HypothesisStatus.FOUND]

    @property
    def ok(self) -> bool:
        return not self.findings and not self.index_errors

    def status_of(self, key: RecordingKey) -> str:
        for check in self.checks:
            if check.recording.key == key:
                return check.status
        msg = f"Unknown recording {key}."
        raise KeyError(msg)


def check_hypothesis(
    hyp_root: typing.Union[str, Path], recording: RecordingRef
) -> typing.Tuple[HypothesisCheck, EventList]:
    """
    Locate and parse the hypothesis of one recording. Missing and unparsable
    files yield an empty list: the detector predicted no seizures there.
    """
    path = hypothesis_path(hyp_root, recording)
    empty = EventList.empty(recording.duration_s)
    if not path.is_file():
        return HypothesisCheck(recording, path, HypothesisStatus.MISSING), empty
    try:
        events = read_events_tsv(path, recording.duration_s)
    except AnnotationParseError as e:
        return (
            HypothesisCheck(recording, path, HypothesisStatus.UNPARSABLE, str(e), e.line),
            empty,
        )
    except OSError as e:
        return HypothesisCheck(recording, path, HypothesisStatus.UNPARSABLE, str(e)), empty
    return HypothesisCheck(recording, path, HypothesisStatus.FOUND), events


def load_hypothesis(
    hyp_root: typing.Union[str, Path], recording: RecordingRef
) -> EventList:
    return check_hypothesis(hyp_root, recording)[1]


def validate_hypothesis_tree(
    hyp_root: typing.Union[str, Path], reference: DatasetIndex
) -> ValidationReport:
    """
    Check that every reference recording has a parsable hypothesis.
    """
    checks = []
    for recording in reference:
        check, _ = check_hypothesis(hyp_root, recording)
        if check.status != HypothesisStatus.FOUND:
            _log.warning(f"{check.path}: {check.status} {check.message}".rstrip())
        checks.append(check)
    return ValidationReport(tuple(checks), reference.errors)
