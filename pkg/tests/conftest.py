import shlex
import sys
import typing
from pathlib import Path

import numpy as np
import pytest

from szbench.annotations import (
    DEFAULT_TASK,
    Event,
    EventList,
    bids_stem,
    hypothesis_path,
    index_dataset,
    write_events_tsv,
)
from szbench.edf import SignalMatrix, header_for, write_edf
from szbench.standardize import CANONICAL_CHANNELS

Layout = typing.Mapping[
    typing.Tuple[str, str, str], typing.Tuple[float, typing.Optional[typing.Sequence[tuple]]]
]


def write_recording(path: Path, signals: SignalMatrix) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_edf(header_for(signals), signals, path)
    return path


def events_of(duration_s: float, intervals: typing.Sequence[tuple]) -> EventList:
    return EventList(duration_s, tuple(Event(float(on), float(d)) for on, d in intervals))


@pytest.fixture
def make_dataset(tmp_path):
    """
    Build a BIDS tree from ``{(subject, session, run): (duration_s, events)}``.
    ``events`` is a list of (onset, duration) pairs, None for no TSV. The
    EDF files hold a single 1 Hz channel, enough for indexing and scoring.
    """

    def make(layout: Layout, root: typing.Optional[Path] = None) -> Path:
        root = root or tmp_path / "bids"
        for (subject, session, run), (duration, intervals) in layout.items():
            stem = bids_stem(subject, session, DEFAULT_TASK, run)
            eeg_dir = root / f"sub-{subject}" / f"ses-{session}" / "eeg"
            n = int(duration)
            signals = SignalMatrix(["Cz"], [1.0], [np.sin(np.arange(n) / 7.0) * 50])
            write_recording(eeg_dir / f"{stem}_eeg.edf", signals)
            if intervals is not None:
                write_events_tsv(events_of(duration, intervals), eeg_dir / f"{stem}_events.tsv")
        return root

    return make


@pytest.fixture
def write_hypotheses():
    """
    Write hypothesis TSVs below ``hyp_root`` for the recordings of ``root``;
    recordings absent from ``events`` get no file.
    """

    def write(hyp_root: Path, root: Path, events: typing.Mapping[tuple, typing.Sequence[tuple]]):
        index = index_dataset(root)
        for recording in index:
            if recording.key in events:
                write_events_tsv(
                    events_of(recording.duration_s, events[recording.key]),
                    hypothesis_path(hyp_root, recording),
                )
        return hyp_root

    return write


def eeg_signals(
    rng: np.random.Generator,
    seconds: int,
    fs: float = 256.0,
    labels: typing.Sequence[str] = CANONICAL_CHANNELS,
    bursts: typing.Sequence[typing.Tuple[float, float]] = (),
) -> SignalMatrix:
    """
    Pink-ish noise on every channel plus strong 10 Hz bursts at ``bursts``
    (onset, duration) on all channels with alternating sign, so that the
    bursts survive common-average re-referencing.
    """
    n = int(seconds * fs)
    t = np.arange(n) / fs
    data = np.cumsum(rng.normal(0, 1, (len(labels), n)), axis=1)
    data -= data.mean(axis=1, keepdims=True)
    data = 0.2 * data + rng.normal(0, 5, (len(labels), n))
    for onset, duration in bursts:
        inside = (t >= onset) & (t < onset + duration)
        for i in range(len(labels)):
            data[i, inside] += (1 if i % 2 else -1) * 150 * np.sin(2 * np.pi * 10 * t[inside])
    return SignalMatrix.from_array(labels, fs, data)


def python_command(script: Path, *placeholders: str) -> str:
    """
    A runner command template executing ``script`` with this interpreter.
    """
    return " ".join(
        [shlex.quote(sys.executable), shlex.quote(str(script)), *placeholders]
    )
