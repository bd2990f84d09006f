"""
Runs an external seizure detector once per recording of a dataset.

The detector is any program that reads one EDF file and writes one events
TSV. It is started from a command template, e.g.::

    docker run --rm -v {input_dir}:/data -v {output_dir}:/output img \
        /data/{input_name} /output/{output_name}

Each job writes into a private temporary directory; the TSV is moved into
the hypothesis tree only if the detector exited cleanly and the file
parses. Every recording yields exactly one ``RunRecord``, and every record
is appended to a JSON-lines journal in the working directory.
"""
import dataclasses
import datetime
import logging
import os
import shlex
import shutil
import signal
import string
import subprocess
import tempfile
import threading
import typing
from pathlib import Path

from .annotations import DatasetIndex, RecordingRef, hypothesis_path, read_events_tsv
from .db import JsonLinesJournal
from .errors import AnnotationParseError, ContractError
from .fingerprint import fingerprint
from .utils import Timer, in_parallel

_log = logging.getLogger("SzBench.runner")

PLACEHOLDERS = ("input", "output", "input_dir", "output_dir", "input_name", "output_name")
JOURNAL_NAME = "run_records.jsonl"


class Outcome:
    PRODUCED = "produced"
    MISSING_OUTPUT = "missing-output"
    NONZERO_EXIT = "nonzero-exit"
    TIMEOUT = "timeout"
    CRASHED = "crashed"
    SKIPPED = "skipped"
    ALL = (PRODUCED, MISSING_OUTPUT, NONZERO_EXIT, TIMEOUT, CRASHED, SKIPPED)


def template_fields(template: str) -> typing.Set[str]:
    try:
        return {name for _, name, _, _ in string.Formatter().parse(template) if name is not None}
    except ValueError as e:
        msg = f"Malformed command template {template!r}: {e}"
        raise ContractError(msg) from e


@dataclasses.dataclass(frozen=True)
class RunnerConfig:
    command_template: str
    max_concurrency: int = 1
    per_file_timeout_s: float = 3600.0
    workdir: Path = Path("szbench-run")
    continue_on_error: bool = True
    resume: bool = False

    def __post_init__(self):
        fields = template_fields(self.command_template)
        missing = [p for p in ("input", "output") if p not in fields]
        if missing:
            msg = f"Command template lacks placeholders: {', '.join('{' + p + '}' for p in missing)}."
            raise ContractError(msg)
        unknown = sorted(fields - set(PLACEHOLDERS))
        if unknown:
            msg = f"Unknown placeholders in command template: {', '.join(unknown)}."
            raise ContractError(msg)
        if self.max_concurrency < 1:
            msg = f"max_concurrency must be at least 1, got {self.max_concurrency}."
            raise ContractError(msg)
        if not self.per_file_timeout_s > 0:
            msg = f"per_file_timeout_s must be positive, got {self.per_file_timeout_s}."
            raise ContractError(msg)
        object.__setattr__(self, "workdir", Path(self.workdir))

    @property
    def hypothesis_root(self) -> Path:
        return self.workdir / "hypotheses"

    @property
    def journal_path(self) -> Path:
        return self.workdir / JOURNAL_NAME


@dataclasses.dataclass(frozen=True)
class RunRecord:
    recording: RecordingRef
    outcome: str
    wall_time_s: float = 0.0
    output_path: typing.Optional[Path] = None
    exit_code: typing.Optional[int] = None
    message: str = ""
    log_path: typing.Optional[Path] = None

    def __post_init__(self):
        if self.outcome not in Outcome.ALL:
            msg = f"Unknown outcome {self.outcome!r}."
            raise ContractError(msg)
        if (self.outcome == Outcome.PRODUCED) != (self.output_path is not None):
            msg = f"Outcome {self.outcome} is inconsistent with output {self.output_path}."
            raise ContractError(msg)

    def journal_entry(self, template_fingerprint: str) -> dict:
        return {
            "recording": self.recording.stem,
            "outcome": self.outcome,
            "wall_time_s": self.wall_time_s,
            "output_path": self.output_path,
            "exit_code": self.exit_code,
            "message": self.message,
            "template": template_fingerprint,
            "timestamp": datetime.datetime.now().isoformat(),
        }


def build_command(template: str, input_path: Path, output_path: Path) -> typing.List[str]:
    """
    Substitute the placeholders (shell-quoted) and split into arguments.
    """
    values = {
        "input": input_path,
        "output": output_path,
        "input_dir": input_path.parent,
        "output_dir": output_path.parent,
        "input_name": input_path.name,
        "output_name": output_path.name,
    }
    text = template.format(**{k: shlex.quote(str(v)) for k, v in values.items()})
    return shlex.split(text)


def _terminate(process: subprocess.Popen) -> None:
    try:
        if hasattr(os, "killpg"):
            os.killpg(process.pid, signal.SIGKILL)
        else:
            process.kill()
    except (ProcessLookupError, PermissionError):
        process.kill()
    process.wait()


class _Job:
    def __init__(
        self,
        cfg: RunnerConfig,
        journal: JsonLinesJournal,
        previous: typing.Mapping[str, dict],
        abort: threading.Event,
    ):
        self.cfg = cfg
        self.journal = journal
        self.previous = previous
        self.abort = abort
        self.template_fingerprint = fingerprint(cfg.command_template)

    def _reusable(self, recording: RecordingRef, final: Path) -> typing.Optional[RunRecord]:
        entry = self.previous.get(recording.stem)
        if not (
            entry
            and entry.get("outcome") == Outcome.PRODUCED
            and entry.get("template") == self.template_fingerprint
            and final.is_file()
        ):
            return None
        try:
            read_events_tsv(final, recording.duration_s)
        except (AnnotationParseError, OSError):
            return None
        return RunRecord(
            recording,
            Outcome.PRODUCED,
            float(entry.get("wall_time_s") or 0.0),
            final,
            entry.get("exit_code"),
            "reused from an earlier run",
        )

    def _execute(self, recording: RecordingRef, final: Path) -> RunRecord:
        cfg = self.cfg
        log_path = cfg.workdir / "logs" / f"{recording.stem}.log"
        tmp_dir = Path(tempfile.mkdtemp(prefix=f"{recording.stem}-", dir=cfg.workdir / "tmp"))
        tmp_output = tmp_dir / final.name
        args = build_command(cfg.command_template, recording.eeg_path.resolve(), tmp_output)
        timer = Timer()
        exit_code = None
        try:
            with log_path.open("wb") as log:
                try:
                    process = subprocess.Popen(
                        args,
                        stdout=log,
                        stderr=subprocess.STDOUT,
                        stdin=subprocess.DEVNULL,
                        start_new_session=True,
                    )
                except OSError as e:
                    return RunRecord(
                        recording, Outcome.CRASHED, timer.time(), message=str(e), log_path=log_path
                    )
                try:
                    exit_code = process.wait(timeout=cfg.per_file_timeout_s)
                except subprocess.TimeoutExpired:
                    _terminate(process)
                    return RunRecord(
                        recording,
                        Outcome.TIMEOUT,
                        timer.time(),
                        message=f"terminated after {cfg.per_file_timeout_s} s",
                        log_path=log_path,
                    )
            wall_time = timer.time()
            if exit_code < 0:
                return RunRecord(
                    recording,
                    Outcome.CRASHED,
                    wall_time,
                    exit_code=exit_code,
                    message=f"killed by signal {-exit_code}",
                    log_path=log_path,
                )
            if exit_code > 0:
                return RunRecord(
                    recording, Outcome.NONZERO_EXIT, wall_time, exit_code=exit_code, log_path=log_path
                )
            if not tmp_output.is_file():
                return RunRecord(
                    recording,
                    Outcome.MISSING_OUTPUT,
                    wall_time,
                    exit_code=exit_code,
                    message="no output file written",
                    log_path=log_path,
                )
            try:
                read_events_tsv(tmp_output, recording.duration_s)
            except AnnotationParseError as e:
                return RunRecord(
                    recording,
                    Outcome.MISSING_OUTPUT,
                    wall_time,
                    exit_code=exit_code,
                    message=f"unparsable output: {e}",
                    log_path=log_path,
                )
            final.parent.mkdir(parents=True, exist_ok=True)
            os.replace(tmp_output, final)
            return RunRecord(
                recording, Outcome.PRODUCED, wall_time, final, exit_code, log_path=log_path
            )
        finally:
            shutil.rmtree(tmp_dir, ignore_errors=True)

    def __call__(self, recording: RecordingRef) -> RunRecord:
        final = hypothesis_path(self.cfg.hypothesis_root, recording)
        if self.abort.is_set():
            return RunRecord(recording, Outcome.SKIPPED, message="run aborted")
        if self.cfg.resume:
            reused = self._reusable(recording, final)
            if reused is not None:
                _log.debug(f"{recording.stem}: reusing {final}.")
                return reused
        try:
            final.unlink(missing_ok=True)
            record = self._execute(recording, final)
        except OSError as e:
            record = RunRecord(recording, Outcome.CRASHED, message=str(e))
        self.journal.append(record.journal_entry(self.template_fingerprint))
        if record.outcome == Outcome.PRODUCED:
            _log.debug(f"{recording.stem}: produced in {record.wall_time_s:.2f} s.")
        else:
            _log.warning(
                f"{recording.stem}: {record.outcome} {record.message}".rstrip()
                + f" (log: {record.log_path})"
            )
            if not self.cfg.continue_on_error:
                self.abort.set()
        return record


def run_dataset(index: DatasetIndex, cfg: RunnerConfig) -> typing.List[RunRecord]:
    """
    Run the detector on every recording, at most ``cfg.max_concurrency`` at
    a time. Records are returned in index order. Without
    ``continue_on_error`` the first failure stops new jobs from starting;
    they are recorded as skipped.
    """
    for sub in ("hypotheses", "tmp", "logs"):
        (cfg.workdir / sub).mkdir(parents=True, exist_ok=True)
    journal = JsonLinesJournal(cfg.journal_path)
    previous = journal.latest("recording") if cfg.resume else {}
    job = _Job(cfg, journal, previous, threading.Event())
    timer = Timer()
    records = in_parallel(job, list(index), cfg.max_concurrency)
    summary = summarize_run(records)
    _log.info(
        f"Ran detector on {summary.n_records} recordings in {timer.time():.1f} s:"
        f" {summary.totals[Outcome.PRODUCED]} produced, {summary.n_failures} failed."
    )
    return records


@dataclasses.dataclass(frozen=True)
class RunSummary:
    totals: typing.Mapping[str, int]
    n_records: int
    n_failures: int
    total_wall_time_s: float
    wall_time_s: typing.Mapping[str, float]
    failures: typing.Tuple[typing.Mapping[str, typing.Any], ...]


def summarize_run(records: typing.Sequence[RunRecord]) -> RunSummary:
    totals = {outcome: 0 for outcome in Outcome.ALL}
    for record in records:
        totals[record.outcome] += 1
    failures = tuple(
        {
            "recording": r.recording.stem,
            "outcome": r.outcome,
            "exit_code": r.exit_code,
            "message": r.message,
            "log_path": r.log_path,
        }
        for r in records
        if r.outcome != Outcome.PRODUCED
    )
    return RunSummary(
        totals=totals,
        n_records=len(records),
        n_failures=len(failures),
        total_wall_time_s=sum(r.wall_time_s for r in records),
        wall_time_s={r.recording.stem: r.wall_time_s for r in records},
        failures=failures,
    )
