"""
Reading and writing of EEG recordings in the European Data Format (EDF).

An EDF file is a 256 byte fixed header, 256 bytes of header per signal and
a sequence of data records. Each data record holds ``samples_per_record``
16-bit little-endian samples for every signal, one signal after the other.
Plain EDF and continuous EDF+ (``EDF+C``) are supported; discontinuous
EDF+ is rejected.

.. code-block:: python

    header, signals = read_edf("sub-01_ses-01_task-szMonitoring_run-01_eeg.edf")
    print(header.labels, recording_duration(header))

    with EdfReader(path) as reader:
        for chunk in reader.iter_chunks(records_per_chunk=600):
            ...  # one array per signal, in physical units
"""
import dataclasses
import datetime
import logging
import math
import re
import typing
from pathlib import Path

import numpy as np

from .errors import ContractError, EdfParseError

_log = logging.getLogger("SzBench.edf")

FIXED_HEADER_BYTES = 256
SIGNAL_HEADER_BYTES = 256
DIGITAL_MIN = -32768
DIGITAL_MAX = 32767

_INT_RE = re.compile(r"[+-]?\d+")
_FLOAT_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_DATE_RE = re.compile(r"(\d\d)\.(\d\d)\.(\d\d)")

# (name, width) of the per-signal fields, stored field by field for all signals.
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


@dataclasses.dataclass(frozen=True)
class EdfSignalHeader:
    label: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    samples_per_record: int
    transducer: str = ""
    physical_dimension: str = "uV"
    prefiltering: str = ""
    reserved: str = ""

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (
            self.digital_max - self.digital_min
        )

    @property
    def offset(self) -> float:
        return self.physical_max - self.gain * self.digital_max

    def sampling_rate(self, record_duration_s: float) -> float:
        return self.samples_per_record / record_duration_s


@dataclasses.dataclass(frozen=True)
class EdfHeader:
    patient_id: str
    recording_id: str
    start_date: datetime.date
    start_time: datetime.time
    num_records: int
    record_duration_s: float
    signals: typing.Tuple[EdfSignalHeader, ...]
    version: str = "0"
    reserved: str = ""
    header_bytes: int = -1

    def __post_init__(self):
        if self.header_bytes == -1:
            # frozen: bypass the setattr guard to fill in the derived value
            object.__setattr__(
                self,
                "header_bytes",
                FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * len(self.signals),
            )

    @property
    def num_signals(self) -> int:
        return len(self.signals)

    @property
    def labels(self) -> typing.List[str]:
        return [s.label for s in self.signals]

    @property
    def is_edf_plus(self) -> bool:
        return self.reserved.startswith("EDF+")

    @property
    def record_bytes(self) -> int:
        return 2 * sum(s.samples_per_record for s in self.signals)

    def sampling_rates(self) -> typing.List[float]:
        return [s.sampling_rate(self.record_duration_s) for s in self.signals]


@dataclasses.dataclass
class SignalMatrix:
    """
    Channel samples in physical units (microvolts for EEG). Channels may
    have different sampling rates; ``samples[i]`` is sampled at ``fs[i]``.
    """

    labels: typing.List[str]
    fs: typing.List[float]
    samples: typing.List[np.ndarray]

    def __post_init__(self):
        if not (len(self.labels) == len(self.fs) == len(self.samples)):
            msg = (
                f"Got {len(self.labels)} labels, {len(self.fs)} sampling rates"
                f" and {len(self.samples)} sample arrays."
            )
            raise ContractError(msg)
        self.samples = [np.asarray(x, dtype=np.float64) for x in self.samples]

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    @property
    def duration_s(self) -> float:
        if not self.samples:
            return 0.0
        return len(self.samples[0]) / self.fs[0]

    def uniform_fs(self) -> float:
        """
        The sampling rate shared by all channels.
        """
        rates = set(self.fs)
        if len(rates) != 1:
            msg = f"Channels do not share one sampling rate: {sorted(rates)}."
            raise ContractError(msg)
        return rates.pop()

    def as_array(self) -> np.ndarray:
        """
        Samples as a ``(n_channels, n_samples)`` array.
        """
        lengths = {len(x) for x in self.samples}
        if len(lengths) > 1:
            msg = f"Channels differ in length: {sorted(lengths)}."
            raise ContractError(msg)
        return np.vstack(self.samples) if self.samples else np.empty((0, 0))

    @classmethod
    def from_array(
        cls, labels: typing.Sequence[str], fs: float, data: np.ndarray
    ) -> "SignalMatrix":
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        return cls(list(labels), [float(fs)] * len(labels), list(data))


class _HeaderCursor:
    """
    Sequential decoding of fixed-width ASCII fields with byte offsets.
    """

    def __init__(self, raw: bytes, base_offset: int, path: typing.Optional[Path]):
        self._raw = raw
        self._base = base_offset
        self._pos = 0
        self._path = path

    @property
    def offset(self) -> int:
        return self._base + self._pos

    def text(self, width: int) -> str:
        chunk = self._raw[self._pos : self._pos + width]
        self._pos += width
        return chunk.decode("ascii", errors="replace").replace("\ufffd", "?").rstrip(" ")

    def _token(self, width: int, pattern: typing.Pattern, name: str) -> str:
        offset = self.offset
        token = self.text(width).strip()
        if not pattern.fullmatch(token):
            msg = f"Field '{name}' is not numeric: {token!r}."
            raise EdfParseError(msg, self._path, offset)
        return token

    def integer(self, width: int, name: str) -> int:
        return int(self._token(width, _INT_RE, name))

    def number(self, width: int, name: str) -> float:
        offset = self.offset
        value = float(self._token(width, _FLOAT_RE, name))
        if not math.isfinite(value):
            msg = f"Field '{name}' is not finite."
            raise EdfParseError(msg, self._path, offset)
        return value


def _parse_date(text: str, path, offset) -> datetime.date:
    match = _DATE_RE.fullmatch(text.strip())
    if not match:
        msg = f"Invalid start date {text!r}."
        raise EdfParseError(msg, path, offset)
    day, month, yy = (int(g) for g in match.groups())
    year = 1900 + yy if yy >= 85 else 2000 + yy
    try:
        return datetime.date(year, month, day)
    except ValueError as e:
        msg = f"Invalid start date {text!r}: {e}"
        raise EdfParseError(msg, path, offset) from e


def _parse_time(text: str, path, offset) -> datetime.time:
    match = _DATE_RE.fullmatch(text.strip())
    if not match:
        msg = f"Invalid start time {text!r}."
        raise EdfParseError(msg, path, offset)
    hour, minute, second = (int(g) for g in match.groups())
    try:
        return datetime.time(hour, minute, second)
    except ValueError as e:
        msg = f"Invalid start time {text!r}: {e}"
        raise EdfParseError(msg, path, offset) from e


def _parse_header(
    f: typing.BinaryIO, file_size: int, path: typing.Optional[Path]
) -> EdfHeader:
    raw = f.read(FIXED_HEADER_BYTES)
    if len(raw) < FIXED_HEADER_BYTES:
        msg = f"File ends inside the fixed header ({len(raw)} of {FIXED_HEADER_BYTES} bytes)."
        raise EdfParseError(msg, path, len(raw))
    cur = _HeaderCursor(raw, 0, path)
    version = cur.text(8)
    patient_id = cur.text(80)
    recording_id = cur.text(80)
    date_offset = cur.offset
    start_date = _parse_date(cur.text(8), path, date_offset)
    time_offset = cur.offset
    start_time = _parse_time(cur.text(8), path, time_offset)
    header_bytes_offset = cur.offset
    header_bytes = cur.integer(8, "header_bytes")
    reserved = cur.text(44)
    records_offset = cur.offset
    num_records = cur.integer(8, "num_records")
    duration_offset = cur.offset
    record_duration_s = cur.number(8, "record_duration")
    ns_offset = cur.offset
    num_signals = cur.integer(4, "num_signals")

    if num_signals < 0:
        msg = f"Negative number of signals ({num_signals})."
        raise EdfParseError(msg, path, ns_offset)
    expected = FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * num_signals
    if header_bytes != expected:
        msg = (
            f"Header size {header_bytes} is inconsistent with {num_signals}"
            f" signals (expected {expected})."
        )
        raise EdfParseError(msg, path, header_bytes_offset)
    if reserved.startswith("EDF+D"):
        msg = "Discontinuous EDF+ (EDF+D) recordings are not supported."
        raise EdfParseError(msg, path, 192)
    if num_records < -1:
        msg = f"Invalid number of data records ({num_records})."
        raise EdfParseError(msg, path, records_offset)

    raw = f.read(SIGNAL_HEADER_BYTES * num_signals)
    if len(raw) < SIGNAL_HEADER_BYTES * num_signals:
        msg = "File ends inside the signal headers."
        raise EdfParseError(msg, path, FIXED_HEADER_BYTES + len(raw))
    cur = _HeaderCursor(raw, FIXED_HEADER_BYTES, path)
    fields: typing.Dict[str, list] = {}
    offsets: typing.Dict[str, int] = {}
    for name, width in _SIGNAL_FIELDS:
        offsets[name] = cur.offset
        if name in ("physical_min", "physical_max"):
            fields[name] = [cur.number(width, name) for _ in range(num_signals)]
        elif name in ("digital_min", "digital_max", "samples_per_record"):
            fields[name] = [cur.integer(width, name) for _ in range(num_signals)]
        else:
            fields[name] = [cur.text(width) for _ in range(num_signals)]

    signals = []
    for i in range(num_signals):
        values = {name: fields[name][i] for name, _ in _SIGNAL_FIELDS}
        signal = EdfSignalHeader(**values)
        if signal.physical_min == signal.physical_max:
            msg = f"Signal {i} ({signal.label}) has physical_min == physical_max."
            raise EdfParseError(msg, path, offsets["physical_min"] + 8 * i)
        if not (DIGITAL_MIN <= signal.digital_min < signal.digital_max <= DIGITAL_MAX):
            msg = (
                f"Signal {i} ({signal.label}) has an invalid digital range"
                f" [{signal.digital_min}, {signal.digital_max}]."
            )
            raise EdfParseError(msg, path, offsets["digital_min"] + 8 * i)
        if signal.samples_per_record <= 0:
            msg = f"Signal {i} ({signal.label}) has no samples per record."
            raise EdfParseError(msg, path, offsets["samples_per_record"] + 8 * i)
        signals.append(signal)

    record_bytes = 2 * sum(s.samples_per_record for s in signals)
    if record_bytes and record_duration_s <= 0:
        msg = f"Record duration must be positive, got {record_duration_s}."
        raise EdfParseError(msg, path, duration_offset)

    data_bytes = max(file_size - header_bytes, 0)
    if record_bytes == 0:
        num_records = max(num_records, 0)
    elif num_records == -1:
        num_records, rest = divmod(data_bytes, record_bytes)
        if rest:
            _log.warning(
                f"{path}: data section is not a whole number of records;"
                f" ignoring the last {rest} bytes."
            )
        _log.info(f"{path}: resolved unknown number of records to {num_records}.")
    elif num_records * record_bytes > data_bytes:
        complete = data_bytes // record_bytes
        msg = (
            f"Truncated data: header announces {num_records} records,"
            f" file holds {complete} complete records."
        )
        raise EdfParseError(msg, path, header_bytes + complete * record_bytes)

    return EdfHeader(
        version=version,
        patient_id=patient_id,
        recording_id=recording_id,
        start_date=start_date,
        start_time=start_time,
        header_bytes=header_bytes,
        reserved=reserved,
        num_records=num_records,
        record_duration_s=record_duration_s,
        signals=tuple(signals),
    )


class EdfReader:
    """
    Sequential reader of one EDF file. The header is decoded on opening;
    data records are decoded on demand so that multi-hour files need not
    be held in memory at once.

    A reader supports one sequential consumer.
    """

    def __init__(self, path: typing.Union[str, Path]) -> None:
        self.path = Path(path)
        self._file: typing.Optional[typing.BinaryIO] = None
        self.header: typing.Optional[EdfHeader] = None

    def open(self) -> "EdfReader":
        self._file = self.path.open("rb")
        try:
            self.header = _parse_header(self._file, self.path.stat().st_size, self.path)
        except Exception:
            self.close()
            raise
        return self

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> "EdfReader":
        return self.open()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def iter_chunks(
        self, records_per_chunk: int = 600
    ) -> typing.Iterator[typing.List[np.ndarray]]:
        """
        Yield the recording in chunks of ``records_per_chunk`` data records.
        Every chunk is a list with one array per signal in physical units.
        """
        if self._file is None or self.header is None:
            msg = "Reader is not open."
            raise ContractError(msg)
        if records_per_chunk < 1:
            msg = f"records_per_chunk must be positive, got {records_per_chunk}."
            raise ContractError(msg)
        header = self.header
        record_bytes = header.record_bytes
        if record_bytes == 0:
            return
        spr = [s.samples_per_record for s in header.signals]
        starts = np.concatenate(([0], np.cumsum(spr)))
        gains = [s.gain for s in header.signals]
        offsets = [s.offset for s in header.signals]
        self._file.seek(header.header_bytes)
        for first in range(0, header.num_records, records_per_chunk):
            count = min(records_per_chunk, header.num_records - first)
            buffer = self._file.read(count * record_bytes)
            if len(buffer) < count * record_bytes:
                msg = "File ends inside a data record."
                raise EdfParseError(
                    msg, self.path, header.header_bytes + first * record_bytes + len(buffer)
                )
            records = np.frombuffer(buffer, dtype="<i2").reshape(count, -1)
            yield [
                records[:, starts[i] : starts[i + 1]].reshape(-1) * gains[i] + offsets[i]
                for i in range(header.num_signals)
            ]

    def read_all(self, records_per_chunk: int = 600) -> SignalMatrix:
        if self.header is None:
            msg = "Reader is not open."
            raise ContractError(msg)
        header = self.header
        samples = [
            np.empty(s.samples_per_record * header.num_records, dtype=np.float64)
            for s in header.signals
        ]
        position = [0] * header.num_signals
        for chunk in self.iter_chunks(records_per_chunk):
            for i, values in enumerate(chunk):
                samples[i][position[i] : position[i] + len(values)] = values
                position[i] += len(values)
        return SignalMatrix(header.labels, header.sampling_rates(), samples)


def read_edf_header(path: typing.Union[str, Path]) -> EdfHeader:
    """
    Decode only the header. The number of records is resolved from the
    file size if the header states it as unknown (-1).
    """
    with EdfReader(path) as reader:
        assert reader.header is not None
        return reader.header


def read_edf(
    path: typing.Union[str, Path], records_per_chunk: int = 600
) -> typing.Tuple[EdfHeader, SignalMatrix]:
    """
    Read header and all samples, converted to physical units.

    :raises EdfParseError: on malformed or truncated files.
    """
    with EdfReader(path) as reader:
        assert reader.header is not None
        return reader.header, reader.read_all(records_per_chunk)


def recording_duration(header: EdfHeader) -> float:
    """
    Duration of the recording in seconds.
    """
    if header.num_records < 0:
        msg = "Number of records is unresolved."
        raise ContractError(msg)
    return header.num_records * header.record_duration_s


def _format_number(value: float, width: int, name: str) -> str:
    if float(value).is_integer() and len(str(int(value))) <= width:
        return str(int(value))
    for decimals in range(width, -1, -1):
        text = f"{value:.{decimals}f}"
        if "." in text:
            text = text.rstrip("0").rstrip(".")
        if len(text) <= width:
            if float(text) != value:
                msg = f"Field '{name}' value {value!r} is not representable in {width} characters."
                raise ContractError(msg)
            return text
    msg = f"Field '{name}' value {value!r} does not fit into {width} characters."
    raise ContractError(msg)


def _format_text(value: str, width: int, name: str) -> bytes:
    try:
        encoded = value.encode("ascii")
    except UnicodeEncodeError as e:
        msg = f"Field '{name}' must be ASCII, got {value!r}."
        raise ContractError(msg) from e
    if len(encoded) > width:
        msg = f"Field '{name}' is longer than {width} characters: {value!r}."
        raise ContractError(msg)
    return encoded.ljust(width, b" ")


def _encode_header(header: EdfHeader) -> bytes:
    year = header.start_date.year
    if not 1985 <= year <= 2084:
        msg = f"Start year {year} cannot be expressed in EDF (1985-2084)."
        raise ContractError(msg)
    parts = [
        _format_text(header.version, 8, "version"),
        _format_text(header.patient_id, 80, "patient_id"),
        _format_text(header.recording_id, 80, "recording_id"),
        _format_text(header.start_date.strftime("%d.%m.%y"), 8, "start_date"),
        _format_text(header.start_time.strftime("%H.%M.%S"), 8, "start_time"),
        _format_text(str(header.header_bytes), 8, "header_bytes"),
        _format_text(header.reserved, 44, "reserved"),
        _format_text(str(header.num_records), 8, "num_records"),
        _format_text(
            _format_number(header.record_duration_s, 8, "record_duration"),
            8,
            "record_duration",
        ),
        _format_text(str(header.num_signals), 4, "num_signals"),
    ]
    for name, width in _SIGNAL_FIELDS:
        for signal in header.signals:
            value = getattr(signal, name)
            if isinstance(value, float):
                value = _format_number(value, width, name)
            parts.append(_format_text(str(value), width, name))
    return b"".join(parts)


def write_edf(
    header: EdfHeader, signals: SignalMatrix, path: typing.Union[str, Path]
) -> None:
    """
    Write ``signals`` with ``header``. Physical values are quantized with
    the header's linear map and clipped to the digital range, so a re-read
    reproduces every sample within one quantization step.

    :raises ContractError: if header and signals disagree or a sample is
        not finite.
    """
    if signals.n_channels == 0 or header.num_signals == 0:
        msg = "Cannot write an EDF file without signals."
        raise ContractError(msg)
    if header.num_signals != signals.n_channels:
        msg = f"Header has {header.num_signals} signals, got {signals.n_channels} channels."
        raise ContractError(msg)
    if header.header_bytes != FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * header.num_signals:
        msg = f"Header size {header.header_bytes} is inconsistent with {header.num_signals} signals."
        raise ContractError(msg)
    if header.num_records < 0:
        msg = "Number of records must be known when writing."
        raise ContractError(msg)
    if header.reserved.startswith("EDF+D"):
        msg = "Discontinuous EDF+ cannot be written."
        raise ContractError(msg)
    for signal, values in zip(header.signals, signals.samples):
        expected = signal.samples_per_record * header.num_records
        if len(values) != expected:
            msg = (
                f"Channel {signal.label} has {len(values)} samples, header"
                f" implies {expected}."
            )
            raise ContractError(msg)
        if not np.all(np.isfinite(values)):
            msg = f"Channel {signal.label} contains NaN or infinite samples."
            raise ContractError(msg)
        if signal.physical_min == signal.physical_max or not (
            DIGITAL_MIN <= signal.digital_min < signal.digital_max <= DIGITAL_MAX
        ):
            msg = f"Channel {signal.label} has an invalid physical or digital range."
            raise ContractError(msg)

    encoded_header = _encode_header(header)
    spr = [s.samples_per_record for s in header.signals]
    starts = np.concatenate(([0], np.cumsum(spr)))
    records = np.empty((header.num_records, int(starts[-1])), dtype="<i2")
    for i, (signal, values) in enumerate(zip(header.signals, signals.samples)):
        digital = np.round((values - signal.offset) / signal.gain)
        digital = np.clip(digital, signal.digital_min, signal.digital_max)
        records[:, starts[i] : starts[i + 1]] = digital.reshape(
            header.num_records, signal.samples_per_record
        )
    with Path(path).open("wb") as f:
        f.write(encoded_header)
        f.write(records.tobytes())
    _log.debug(f"Wrote {header.num_records} records of {header.num_signals} signals to {path}.")


def header_for(
    signals: SignalMatrix,
    record_duration_s: float = 1.0,
    patient_id: str = "X X X X",
    recording_id: str = "",
    start: typing.Optional[datetime.datetime] = None,
    physical_dimension: str = "uV",
    reserved: str = "",
) -> EdfHeader:
    """
    Build a header consistent with ``signals``: full 16-bit digital range,
    integer physical range enclosing the data. Every channel must hold a
    whole number of records.
    """
    if signals.n_channels == 0:
        msg = "Cannot build a header without signals."
        raise ContractError(msg)
    start = start or datetime.datetime(1985, 1, 1)
    signal_headers = []
    num_records = None
    for label, fs, values in zip(signals.labels, signals.fs, signals.samples):
        spr = fs * record_duration_s
        if not float(spr).is_integer() or spr <= 0:
            msg = f"Channel {label}: {fs} Hz does not give whole samples per {record_duration_s} s record."
            raise ContractError(msg)
        spr = int(spr)
        if len(values) % spr:
            msg = f"Channel {label}: {len(values)} samples are not a whole number of records."
            raise ContractError(msg)
        if num_records is None:
            num_records = len(values) // spr
        elif num_records != len(values) // spr:
            msg = "Channels span different numbers of records."
            raise ContractError(msg)
        finite = values[np.isfinite(values)]
        low = math.floor(finite.min()) if finite.size else -1
        high = math.ceil(finite.max()) if finite.size else 1
        if low == high:
            low, high = low - 1, high + 1
        signal_headers.append(
            EdfSignalHeader(
                label=label,
                physical_min=float(low),
                physical_max=float(high),
                digital_min=DIGITAL_MIN,
                digital_max=DIGITAL_MAX,
                samples_per_record=spr,
                physical_dimension=physical_dimension,
            )
        )
    return EdfHeader(
        patient_id=patient_id,
        recording_id=recording_id,
        start_date=start.date(),
        start_time=start.time().replace(microsecond=0),
        num_records=int(num_records or 0),
        record_duration_s=float(record_duration_s),
        signals=tuple(signal_headers),
        reserved=reserved,
    )
