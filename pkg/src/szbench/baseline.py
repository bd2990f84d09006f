"""
A band-power threshold detector. It exists to exercise the pipeline end to
end and to produce non-trivial hypotheses, not to compete.
"""
import dataclasses
import logging
import typing
from pathlib import Path

import numpy as np
from scipy.signal import butter, filtfilt, iirnotch, sosfiltfilt

from .annotations import Event, EventList, write_events_tsv
from .edf import SignalMatrix, read_edf, recording_duration
from .errors import ContractError

_log = logging.getLogger("SzBench.baseline")

EDF_ANNOTATIONS_LABEL = "EDF Annotations"


@dataclasses.dataclass(frozen=True)
class BaselineConfig:
    """
    :param window_s: Length of the non-overlapping analysis windows.
    :param band_low_hz: Lower edge of the band-pass.
    :param band_high_hz: Upper edge of the band-pass.
    :param notch_hz: Power line frequency to remove, None to skip.
    :param threshold_k: A window is positive if its power exceeds
        ``median + threshold_k * spread`` of all windows of the recording.
    :param min_event_s: Shorter runs of positive windows are dropped.
    :param min_relative_spread: Lower bound of the spread as fraction of the
        median, so that a recording of constant power never triggers.
    """

    window_s: float = 5.0
    band_low_hz: float = 2.0
    band_high_hz: float = 40.0
    notch_hz: typing.Optional[float] = 50.0
    notch_quality: float = 30.0
    filter_order: int = 4
    threshold_k: float = 3.0
    min_event_s: float = 10.0
    min_relative_spread: float = 0.1

    def __post_init__(self):
        if not self.window_s > 0:
            msg = f"window_s must be positive, got {self.window_s}."
            raise ContractError(msg)
        if not 0 < self.band_low_hz < self.band_high_hz:
            msg = f"Invalid band {self.band_low_hz}-{self.band_high_hz} Hz."
            raise ContractError(msg)
        if self.notch_hz is not None and not self.notch_hz > 0:
            msg = f"notch_hz must be positive or None, got {self.notch_hz}."
            raise ContractError(msg)
        if self.threshold_k < 0 or self.min_event_s < 0 or self.min_relative_spread < 0:
            msg = "threshold_k, min_event_s and min_relative_spread must not be negative."
            raise ContractError(msg)
        if self.filter_order < 1:
            msg = f"filter_order must be positive, got {self.filter_order}."
            raise ContractError(msg)


def band_power(data: np.ndarray, fs: float, cfg: BaselineConfig) -> np.ndarray:
    """
    Zero-phase notch and band-pass filtered copy of ``data``
    (channels x samples).
    """
    if not cfg.band_high_hz < fs / 2:
        msg = f"Band edge {cfg.band_high_hz} Hz is not below Nyquist ({fs / 2} Hz)."
        raise ContractError(msg)
    if cfg.notch_hz is not None and cfg.notch_hz < fs / 2:
        b, a = iirnotch(cfg.notch_hz, cfg.notch_quality, fs=fs)
        data = filtfilt(b, a, data, axis=-1)
    sos = butter(
        cfg.filter_order, [cfg.band_low_hz, cfg.band_high_hz], btype="bandpass", fs=fs, output="sos"
    )
    return sosfiltfilt(sos, data, axis=-1)


def window_power(signals: SignalMatrix, cfg: BaselineConfig) -> typing.Tuple[np.ndarray, float]:
    """
    Mean in-band power across channels for every complete window, plus the
    window length in seconds.
    """
    fs = signals.uniform_fs()
    data = signals.as_array()
    window_len = max(int(round(cfg.window_s * fs)), 1)
    n_windows = data.shape[1] // window_len
    if n_windows == 0 or data.shape[0] == 0:
        return np.zeros(0), window_len / fs
    filtered = band_power(data, fs, cfg)[:, : n_windows * window_len]
    windows = filtered.reshape(data.shape[0], n_windows, window_len)
    return np.mean(windows**2, axis=(0, 2)), window_len / fs


def detect(signals: SignalMatrix, cfg: typing.Optional[BaselineConfig] = None) -> EventList:
    """
    Runs of windows whose power exceeds the robust per-recording threshold.
    A recording shorter than one window gives no events.
    """
    cfg = cfg or BaselineConfig()
    duration = signals.duration_s
    power, window_s = window_power(signals, cfg)
    if power.size == 0:
        return EventList.empty(duration)
    q1, median, q3 = np.percentile(power, [25, 50, 75])
    spread = max(q3 - q1, cfg.min_relative_spread * median)
    positive = power > median + cfg.threshold_k * spread

    events = []
    edges = np.flatnonzero(np.diff(np.concatenate(([0], positive.astype(np.int8), [0]))))
    for start, stop in zip(edges[::2], edges[1::2]):
        event = Event(float(start * window_s), float((stop - start) * window_s))
        if event.duration_s >= cfg.min_event_s:
            events.append(event)
    _log.debug(f"{int(positive.sum())} of {power.size} windows positive, {len(events)} events.")
    return EventList(duration, tuple(events))


def detect_file(
    input_path: typing.Union[str, Path],
    output_path: typing.Union[str, Path],
    cfg: typing.Optional[BaselineConfig] = None,
) -> EventList:
    """
    Detect on one EDF file and write the events TSV; usable as the detector
    of the runner.
    """
    header, signals = read_edf(input_path)
    keep = [i for i, label in enumerate(signals.labels) if label != EDF_ANNOTATIONS_LABEL]
    signals = SignalMatrix(
        [signals.labels[i] for i in keep],
        [signals.fs[i] for i in keep],
        [signals.samples[i] for i in keep],
    )
    events = detect(signals, cfg)
    events = EventList(recording_duration(header), events.events)
    write_events_tsv(events, output_path)
    _log.info(f"Detected {len(events)} events in {input_path}.")
    return events
