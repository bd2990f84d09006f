"""
Conversion of heterogeneous EEG recordings into the canonical form scored by
the benchmark: the 19 channels of the 10-20 system in a fixed order,
re-referenced to their common average and uniformly sampled (256 Hz by
default), written as a BIDS tree.
"""
import dataclasses
import datetime
import fractions
import json
import logging
import math
import re
import typing
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import firwin, resample_poly

from .annotations import (
    _EEG_RE,
    DEFAULT_TASK,
    Event,
    EventList,
    bids_stem,
    read_events_tsv,
    write_events_tsv,
)
from .edf import SignalMatrix, header_for, read_edf, recording_duration, write_edf
from .errors import ContractError, StandardizationError, SzBenchError
from .utils import Timer, in_parallel

_log = logging.getLogger("SzBench.standardize")

CANONICAL_CHANNELS = (
    "Fp1",
    "F3",
    "C3",
    "P3",
    "O1",
    "F7",
    "T3",
    "T5",
    "Fz",
    "Cz",
    "Pz",
    "Fp2",
    "F4",
    "C4",
    "P4",
    "O2",
    "F8",
    "T4",
    "T6",
)
OUTPUT_SUFFIX = "-Avg"
BLANK_PATIENT = "X X X X"

# 10-10 names of the temporal and parietal electrodes.
DEFAULT_ALIASES = {"T7": "T3", "T8": "T4", "P7": "T5", "P8": "T6"}

_PREFIX_RE = re.compile(r"^EEG\s+")
_SUFFIX_RE = re.compile(r"-(REF|AVG|AV|AR|CAR|LE|A1|A2|M1|M2)$")


def normalize_label(label: str) -> str:
    """
    Uppercase label without the ``EEG`` prefix and reference suffixes,
    e.g. ``EEG FP1-REF`` and ``Fp1-Avg`` both become ``FP1``.
    """
    name = label.strip().upper()
    name = _PREFIX_RE.sub("", name)
    name = name.replace("\u2013", "-").replace("\u2014", "-")
    name = re.sub(r"[\s_]+", "-", name)
    name = _SUFFIX_RE.sub("", name)
    return name.strip("- ")


@dataclasses.dataclass(frozen=True)
class ChannelMap:
    """
    Canonical channel order plus an alias table. Labels are compared after
    ``normalize_label``; the alias table maps normalized raw labels to
    canonical labels.
    """

    canonical_order: typing.Tuple[str, ...] = CANONICAL_CHANNELS
    aliases: typing.Mapping[str, str] = dataclasses.field(
        default_factory=lambda: dict(DEFAULT_ALIASES)
    )

    def __post_init__(self):
        if len(self.canonical_order) != len(CANONICAL_CHANNELS):
            msg = f"Expected {len(CANONICAL_CHANNELS)} canonical channels, got {len(self.canonical_order)}."
            raise ContractError(msg)
        upper = {c.upper(): c for c in self.canonical_order}
        if len(upper) != len(self.canonical_order):
            msg = f"Canonical channels contain duplicates: {self.canonical_order}."
            raise ContractError(msg)
        aliases = {}
        for raw, target in self.aliases.items():
            if str(target).upper() not in upper:
                msg = f"Alias {raw!r} points to {target!r}, which is not a canonical channel."
                raise ContractError(msg)
            aliases[normalize_label(str(raw))] = upper[str(target).upper()]
        object.__setattr__(self, "aliases", aliases)
        object.__setattr__(self, "_by_upper", upper)

    def resolve(self, label: str) -> typing.Optional[str]:
        """
        The canonical label ``label`` stands for, or None.
        """
        name = normalize_label(label)
        if name in self.aliases:
            return self.aliases[name]
        return self._by_upper.get(name)  # type: ignore[attr-defined]

    def with_aliases(self, extra: typing.Mapping[str, str]) -> "ChannelMap":
        merged = dict(self.aliases)
        merged.update(extra)
        return ChannelMap(self.canonical_order, merged)


@dataclasses.dataclass(frozen=True)
class ResamplerConfig:
    """
    Polyphase windowed-sinc resampler. The low-pass cutoff is
    ``cutoff`` times the Nyquist frequency of the lower rate, the filter
    spans ``zero_crossings`` zero crossings of the sinc.
    """

    beta: float = 8.0
    cutoff: float = 0.9
    zero_crossings: int = 64
    max_denominator: int = 1000

    def __post_init__(self):
        if not 0 < self.cutoff <= 1:
            msg = f"Resampler cutoff must lie in (0, 1], got {self.cutoff}."
            raise ContractError(msg)
        if self.zero_crossings < 2 or self.zero_crossings % 2:
            msg = f"zero_crossings must be a positive even number, got {self.zero_crossings}."
            raise ContractError(msg)
        if self.beta < 0 or self.max_denominator < 1:
            msg = "Resampler beta must be non-negative and max_denominator positive."
            raise ContractError(msg)


@dataclasses.dataclass(frozen=True)
class StandardizeConfig:
    target_fs: float = 256.0
    resampler: ResamplerConfig = dataclasses.field(default_factory=ResamplerConfig)
    aliases: typing.Mapping[str, str] = dataclasses.field(default_factory=dict)
    workers: int = 1
    task: str = DEFAULT_TASK

    def __post_init__(self):
        if not (self.target_fs > 0 and float(self.target_fs).is_integer()):
            msg = f"target_fs must be a positive whole number of Hz, got {self.target_fs}."
            raise ContractError(msg)
        if not re.fullmatch(r"[A-Za-z0-9]+", self.task):
            msg = f"Task label must be alphanumeric, got {self.task!r}."
            raise ContractError(msg)

    def channel_map(self) -> ChannelMap:
        return ChannelMap().with_aliases(self.aliases)


def map_channels(signals: SignalMatrix, channel_map: ChannelMap) -> SignalMatrix:
    """
    Select the canonical channels in canonical order and drop all others.

    :raises StandardizationError: if a canonical channel is missing or two
        input channels resolve to the same canonical channel.
    """
    found: typing.Dict[str, int] = {}
    for i, label in enumerate(signals.labels):
        canonical = channel_map.resolve(label)
        if canonical is None:
            continue
        if canonical in found:
            msg = (
                f"Channels {signals.labels[found[canonical]]!r} and {label!r}"
                f" both map to {canonical}."
            )
            raise StandardizationError(msg)
        found[canonical] = i
    missing = [c for c in channel_map.canonical_order if c not in found]
    if missing:
        msg = f"Missing channels: {', '.join(missing)}."
        raise StandardizationError(msg, missing)
    order = [found[c] for c in channel_map.canonical_order]
    return SignalMatrix(
        list(channel_map.canonical_order),
        [signals.fs[i] for i in order],
        [signals.samples[i].copy() for i in order],
    )


def common_average(signals: SignalMatrix) -> SignalMatrix:
    """
    Subtract the per-sample mean over all channels from every channel.
    """
    if signals.n_channels < 2:
        msg = f"Common average needs at least 2 channels, got {signals.n_channels}."
        raise ContractError(msg)
    data = signals.as_array()
    referenced = data - data.mean(axis=0, keepdims=True)
    return SignalMatrix(list(signals.labels), list(signals.fs), list(referenced))


def _rational_ratio(source_fs: float, target_fs: float, max_denominator: int) -> fractions.Fraction:
    if not (source_fs > 0 and target_fs > 0):
        msg = f"Sampling rates must be positive, got {source_fs} -> {target_fs}."
        raise ContractError(msg)
    exact = target_fs / source_fs
    ratio = fractions.Fraction(exact).limit_denominator(max_denominator)
    if abs(float(ratio) - exact) > 1e-9 * exact:
        msg = f"Cannot resample {source_fs} Hz to {target_fs} Hz with a rational ratio (denominator <= {max_denominator})."
        raise ContractError(msg)
    return ratio


def polyphase_filter(up: int, down: int, cfg: ResamplerConfig) -> np.ndarray:
    """
    Kaiser-windowed sinc low-pass for ``resample_poly``. Every polyphase
    branch sums to ``1 / up`` so that constant signals pass unchanged.
    """
    max_rate = max(up, down)
    half_len = cfg.zero_crossings // 2 * max_rate
    h = firwin(2 * half_len + 1, cfg.cutoff / max_rate, window=("kaiser", cfg.beta))
    for phase in range(up):
        h[phase::up] /= h[phase::up].sum() * up
    return h


def resample_channel(
    values: np.ndarray,
    source_fs: float,
    target_fs: float,
    cfg: typing.Optional[ResamplerConfig] = None,
) -> np.ndarray:
    cfg = cfg or ResamplerConfig()
    ratio = _rational_ratio(source_fs, target_fs, cfg.max_denominator)
    values = np.asarray(values, dtype=np.float64)
    if ratio == 1:
        return values.copy()
    up, down = ratio.numerator, ratio.denominator
    length = math.floor(fractions.Fraction(len(values)) * ratio + fractions.Fraction(1, 2))
    if len(values) == 0:
        return np.zeros(0)
    out = resample_poly(
        values, up, down, window=polyphase_filter(up, down, cfg), padtype="reflect"
    )
    return out[:length]


def resample(
    signals: SignalMatrix,
    target_fs: float,
    cfg: typing.Optional[ResamplerConfig] = None,
) -> SignalMatrix:
    """
    Resample every channel to ``target_fs``. A channel of ``n`` samples
    becomes ``round(n * target_fs / fs)`` samples.

    :raises ContractError: if a ratio has no rational approximation with
        a denominator up to ``cfg.max_denominator``.
    """
    return SignalMatrix(
        list(signals.labels),
        [float(target_fs)] * signals.n_channels,
        [resample_channel(x, fs, target_fs, cfg) for x, fs in zip(signals.samples, signals.fs)],
    )


def standardize_recording(
    signals: SignalMatrix,
    cfg: typing.Optional[StandardizeConfig] = None,
    channel_map: typing.Optional[ChannelMap] = None,
) -> SignalMatrix:
    """
    Channel selection, resampling and common-average re-referencing. The
    result is trimmed to whole seconds and labeled ``<channel>-Avg``.
    """
    cfg = cfg or StandardizeConfig()
    channel_map = channel_map or cfg.channel_map()
    selected = map_channels(signals, channel_map)
    resampled = resample(selected, cfg.target_fs, cfg.resampler)
    per_record = int(cfg.target_fs)
    shortest = min(len(x) for x in resampled.samples)
    n_keep = shortest // per_record * per_record
    if n_keep == 0:
        msg = "Recording is shorter than one second."
        raise StandardizationError(msg)
    if max(len(x) for x in resampled.samples) != n_keep:
        _log.warning(
            f"Trimmed recording to {n_keep // per_record} s"
            f" ({shortest - n_keep} trailing samples dropped)."
        )
    trimmed = SignalMatrix(
        resampled.labels, resampled.fs, [x[:n_keep] for x in resampled.samples]
    )
    referenced = common_average(trimmed)
    referenced.labels = [f"{c}{OUTPUT_SUFFIX}" for c in referenced.labels]
    return referenced


def _clip_events(events: EventList, duration_s: float) -> EventList:
    kept = []
    for e in events:
        if e.onset_s >= duration_s:
            continue
        kept.append(Event.between(e.onset_s, min(e.end_s, duration_s)) if e.end_s > duration_s else e)
    return EventList(duration_s, tuple(kept))


@dataclasses.dataclass(frozen=True)
class _ConversionJob:
    source: Path
    subject_id: str
    session_id: str
    run_id: str
    events_source: typing.Optional[Path]


@dataclasses.dataclass(frozen=True)
class ConversionOutcome:
    source: Path
    eeg_path: typing.Optional[Path] = None
    events_path: typing.Optional[Path] = None
    error: str = ""
    missing_channels: typing.Tuple[str, ...] = ()
    runtime: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.error


@dataclasses.dataclass(frozen=True)
class ConversionReport:
    src: Path
    dst: Path
    outcomes: typing.Tuple[ConversionOutcome, ...] = ()

    @property
    def succeeded(self) -> typing.List[ConversionOutcome]:
        return [o for o in self.outcomes if o.ok]

    @property
    def failed(self) -> typing.List[ConversionOutcome]:
        return [o for o in self.outcomes if not o.ok]

    @property
    def ok(self) -> bool:
        return not self.failed


def _annotation_source(path: Path) -> typing.Optional[Path]:
    stem = path.stem
    candidates = [path.with_name(f"{stem}_events.tsv"), path.with_name(f"{stem}.tsv")]
    if stem.endswith("_eeg"):
        candidates.insert(0, path.with_name(f"{stem[:-4]}_events.tsv"))
    return next((c for c in candidates if c.is_file()), None)


def discover_sources(
    src: typing.Union[str, Path], exclude: typing.Optional[Path] = None
) -> typing.List[_ConversionJob]:
    """
    Every EDF file below ``src``. BIDS names keep their identifiers;
    other files take the directory name as subject, session ``01`` and
    their position in the directory as run.
    """
    src = Path(src)
    paths = sorted(p for p in src.rglob("*") if p.is_file() and p.suffix.lower() == ".edf")
    if exclude is not None:
        exclude = exclude.resolve()
        paths = [p for p in paths if exclude not in p.resolve().parents]
    position: typing.Dict[Path, int] = {}
    jobs = []
    for path in paths:
        match = _EEG_RE.fullmatch(path.name)
        if match:
            ids = (match["subject"], match["session"], match["run"])
        else:
            position[path.parent] = position.get(path.parent, 0) + 1
            subject = re.sub(r"[^A-Za-z0-9]", "", path.parent.name) or "01"
            ids = (subject, "01", f"{position[path.parent]:02d}")
        jobs.append(_ConversionJob(path, *ids, _annotation_source(path)))
    return jobs


def _convert(
    job: _ConversionJob, dst: Path, cfg: StandardizeConfig, channel_map: ChannelMap
) -> ConversionOutcome:
    timer = Timer()
    try:
        header, signals = read_edf(job.source)
        source_duration = recording_duration(header)
        events = (
            read_events_tsv(job.events_source, source_duration)
            if job.events_source is not None
            else EventList.empty(source_duration)
        )
        standardized = standardize_recording(signals, cfg, channel_map)
        out_header = header_for(
            standardized,
            record_duration_s=1.0,
            patient_id=BLANK_PATIENT,
            start=datetime.datetime.combine(header.start_date, header.start_time),
        )
        out_dir = dst / f"sub-{job.subject_id}" / f"ses-{job.session_id}" / "eeg"
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = bids_stem(job.subject_id, job.session_id, cfg.task, job.run_id)
        eeg_path = out_dir / f"{stem}_eeg.edf"
        events_path = out_dir / f"{stem}_events.tsv"
        write_edf(out_header, standardized, eeg_path)
        write_events_tsv(_clip_events(events, standardized.duration_s), events_path)
    except StandardizationError as e:
        _log.warning(f"Could not convert {job.source}: {e}")
        return ConversionOutcome(
            job.source, error=str(e), missing_channels=tuple(e.missing), runtime=timer.time()
        )
    except (SzBenchError, OSError) as e:
        _log.warning(f"Could not convert {job.source}: {e}")
        return ConversionOutcome(job.source, error=str(e), runtime=timer.time())
    return ConversionOutcome(job.source, eeg_path, events_path, runtime=timer.time())


def _write_scaffolding(dst: Path, subjects: typing.Iterable[str]) -> None:
    dst.mkdir(parents=True, exist_ok=True)
    description = {"Name": dst.name or "SzBench dataset", "BIDSVersion": "1.9.0", "DatasetType": "raw"}
    (dst / "dataset_description.json").write_text(json.dumps(description, indent=2) + "\n")
    participants = pd.DataFrame({"participant_id": [f"sub-{s}" for s in sorted(set(subjects))]})
    participants.to_csv(dst / "participants.tsv", sep="\t", index=False, lineterminator="\n")


def standardize_dataset(
    src: typing.Union[str, Path],
    dst: typing.Union[str, Path],
    cfg: typing.Optional[StandardizeConfig] = None,
    channel_map: typing.Optional[ChannelMap] = None,
) -> ConversionReport:
    """
    Convert every EDF file below ``src`` into a BIDS tree in ``dst``.
    Failing files are recorded in the report; ``src`` is only read.
    """
    cfg = cfg or StandardizeConfig()
    channel_map = channel_map or cfg.channel_map()
    src, dst = Path(src), Path(dst)
    if not src.is_dir():
        msg = f"Source {src} is not a directory."
        raise ContractError(msg)
    timer = Timer()
    jobs = discover_sources(src, exclude=dst)
    seen: typing.Dict[typing.Tuple[str, str, str], Path] = {}
    runnable, rejected = [], []
    for job in jobs:
        key = (job.subject_id, job.session_id, job.run_id)
        if key in seen:
            message = f"Recording {key} already produced by {seen[key]}."
            _log.warning(f"Could not convert {job.source}: {message}")
            rejected.append(ConversionOutcome(job.source, error=message))
            continue
        seen[key] = job.source
        runnable.append(job)
    results = in_parallel(lambda job: _convert(job, dst, cfg, channel_map), runnable, cfg.workers)
    converted = {job.subject_id for job, o in zip(runnable, results) if o.ok}
    outcomes = sorted(results + rejected, key=lambda o: str(o.source))
    _write_scaffolding(dst, converted)
    report = ConversionReport(src, dst, tuple(outcomes))
    _log.info(
        f"Converted {len(report.succeeded)} of {len(report.outcomes)} recordings"
        f" from {src} in {timer.time():.1f} s."
    )
    return report
