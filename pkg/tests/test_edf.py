import datetime

import numpy as np
import pytest

from szbench.edf import (
    EdfHeader,
    EdfReader,
    EdfSignalHeader,
    SignalMatrix,
    _encode_header,
    header_for,
    read_edf,
    read_edf_header,
    recording_duration,
    write_edf,
)
from szbench.errors import ContractError, EdfParseError, SzBenchError
from szbench.standardize import CANONICAL_CHANNELS


def _signal_header(label="Cz", spr=256, pmin=-3200.0, pmax=3200.0):
    return EdfSignalHeader(
        label=label,
        physical_min=pmin,
        physical_max=pmax,
        digital_min=-32768,
        digital_max=32767,
        samples_per_record=spr,
    )


def _header(signals, num_records, record_duration_s=1.0, reserved=""):
    return EdfHeader(
        patient_id="X X X X",
        recording_id="Startdate 01-JAN-2020 test",
        start_date=datetime.date(2020, 1, 1),
        start_time=datetime.time(12, 30, 5),
        num_records=num_records,
        record_duration_s=record_duration_s,
        signals=tuple(signals),
        reserved=reserved,
    )


def test_header_size_of_nineteen_signals(tmp_path):
    rng = np.random.default_rng(1)
    signals = SignalMatrix.from_array(CANONICAL_CHANNELS, 256, rng.normal(0, 20, (19, 256 * 60)))
    header = header_for(signals)
    assert header.header_bytes == 5120
    write_edf(header, signals, tmp_path / "a.edf")
    read_back = read_edf_header(tmp_path / "a.edf")
    assert read_back == header
    assert read_back.header_bytes == 5120
    assert recording_duration(read_back) == 60


def test_linear_map_of_asymmetric_range(tmp_path):
    header = _header([_signal_header()], 1)
    path = tmp_path / "zero.edf"
    path.write_bytes(_encode_header(header) + np.zeros(256, dtype="<i2").tobytes())
    _, signals = read_edf(path)
    assert signals.samples[0][0] == pytest.approx(0.048828, abs=1e-6)


def test_constant_signal_within_quantization_step(tmp_path):
    header = _header([_signal_header()], 10)
    signals = SignalMatrix(["Cz"], [256.0], [np.full(2560, 100.0)])
    write_edf(header, signals, tmp_path / "c.edf")
    _, read_back = read_edf(tmp_path / "c.edf")
    assert np.max(np.abs(read_back.samples[0] - 100.0)) <= 3200 * 2 / 65535


def test_unknown_number_of_records_resolved_from_size(tmp_path):
    header = _header([_signal_header(spr=4)], -1)
    data = np.zeros(3600 * 4, dtype="<i2").tobytes()
    path = tmp_path / "unknown.edf"
    path.write_bytes(_encode_header(header) + data)
    assert read_edf_header(path).num_records == 3600
    assert recording_duration(read_edf_header(path)) == 3600


def test_unknown_number_of_records_drops_partial_record(tmp_path):
    header = _header([_signal_header(spr=4)], -1)
    path = tmp_path / "partial.edf"
    path.write_bytes(_encode_header(header) + np.zeros(10 * 4 + 3, dtype="<i2").tobytes())
    assert read_edf_header(path).num_records == 10


def test_recording_duration():
    assert recording_duration(_header([_signal_header()], 3600)) == 3600
    assert recording_duration(_header([_signal_header()], 360, 10.0)) == 3600
    assert recording_duration(_header([_signal_header()], 60)) == 60
    with pytest.raises(ContractError):
        recording_duration(_header([_signal_header()], -1))


def test_truncated_file_names_offset(tmp_path):
    rng = np.random.default_rng(2)
    signals = SignalMatrix.from_array(["Cz", "Pz"], 128, rng.normal(0, 10, (2, 128 * 5)))
    path = tmp_path / "t.edf"
    write_edf(header_for(signals), signals, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-100])
    with pytest.raises(EdfParseError) as e:
        read_edf(path)
    assert e.value.offset == 768 + 4 * 2 * 2 * 128
    path.write_bytes(raw[:200])
    with pytest.raises(EdfParseError) as e:
        read_edf(path)
    assert e.value.offset == 200


def test_inconsistent_header_bytes(tmp_path):
    header = _header([_signal_header()], 1)
    raw = bytearray(_encode_header(header))
    raw[184:192] = b"768     "
    path = tmp_path / "h.edf"
    path.write_bytes(bytes(raw) + np.zeros(256, dtype="<i2").tobytes())
    with pytest.raises(EdfParseError, match="inconsistent"):
        read_edf(path)


def test_non_numeric_field(tmp_path):
    header = _header([_signal_header()], 1)
    raw = bytearray(_encode_header(header))
    raw[236:244] = b"ten     "
    path = tmp_path / "n.edf"
    path.write_bytes(bytes(raw) + np.zeros(256, dtype="<i2").tobytes())
    with pytest.raises(EdfParseError) as e:
        read_edf(path)
    assert e.value.offset == 236


def test_discontinuous_edf_plus_rejected(tmp_path):
    header = _header([_signal_header()], 1, reserved="EDF+D")
    path = tmp_path / "d.edf"
    path.write_bytes(_encode_header(header) + np.zeros(256, dtype="<i2").tobytes())
    with pytest.raises(EdfParseError, match="EDF\\+D"):
        read_edf(path)
    with pytest.raises(ContractError):
        write_edf(header, SignalMatrix(["Cz"], [256.0], [np.zeros(256)]), tmp_path / "w.edf")


def test_write_contract_errors(tmp_path):
    with pytest.raises(ContractError):
        write_edf(_header([], 1), SignalMatrix([], [], []), tmp_path / "e.edf")
    header = _header([_signal_header()], 2)
    with pytest.raises(ContractError):
        write_edf(header, SignalMatrix(["Cz"], [256.0], [np.zeros(256)]), tmp_path / "e.edf")
    with pytest.raises(ContractError):
        write_edf(header, SignalMatrix.from_array(["Cz", "Pz"], 256, np.zeros((2, 512))), tmp_path / "e.edf")
    with pytest.raises(ContractError):
        header_for(SignalMatrix([], [], []))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_samples_are_rejected_on_write(tmp_path, bad):
    data = np.zeros((2, 256 * 2))
    data[1, 300] = bad
    signals = SignalMatrix.from_array(["Cz", "Pz"], 256, data)
    path = tmp_path / "nan.edf"
    with pytest.raises(ContractError, match="Pz"):
        write_edf(header_for(signals), signals, path)
    assert not path.exists()


def test_non_ascii_text_is_rejected_on_write(tmp_path):
    header = _header([_signal_header(label="Fp1é")], 1)
    with pytest.raises(ContractError):
        write_edf(header, SignalMatrix(["Fp1"], [256.0], [np.zeros(256)]), tmp_path / "x.edf")


def test_round_trip_random_files(tmp_path):
    rng = np.random.default_rng(3)
    for i in range(50):
        n_channels = int(rng.integers(1, 8))
        record_duration = float(rng.choice([0.5, 1.0, 2.0]))
        num_records = int(rng.integers(1, 20))
        spr = [int(rng.choice([8, 16, 32, 64])) for _ in range(n_channels)]
        labels = [f"CH{c}" for c in range(n_channels)]
        samples = [rng.normal(0, 100, s * num_records) for s in spr]
        signals = SignalMatrix(labels, [s / record_duration for s in spr], samples)
        header = header_for(
            signals,
            record_duration_s=record_duration,
            recording_id=f"rec {i}",
            start=datetime.datetime(2000 + i, 1 + i % 12, 1 + i % 28, i % 24, i % 60, 0),
        )
        path = tmp_path / f"r{i}.edf"
        write_edf(header, signals, path)
        read_header, read_signals = read_edf(path, records_per_chunk=3)
        assert read_header == header
        copy = tmp_path / f"r{i}-copy.edf"
        write_edf(read_header, read_signals, copy)
        assert copy.read_bytes()[: header.header_bytes] == path.read_bytes()[: header.header_bytes]
        for signal, original, value in zip(header.signals, samples, read_signals.samples):
            assert np.max(np.abs(value - original)) <= signal.gain


def test_streaming_equals_whole_file(tmp_path):
    rng = np.random.default_rng(4)
    signals = SignalMatrix.from_array(["A", "B", "C"], 64, rng.normal(0, 50, (3, 64 * 37)))
    path = tmp_path / "s.edf"
    write_edf(header_for(signals), signals, path)
    _, whole = read_edf(path)
    with EdfReader(path) as reader:
        chunks = list(reader.iter_chunks(records_per_chunk=5))
    assert len(chunks) == 8
    for i in range(3):
        assert np.array_equal(np.concatenate([c[i] for c in chunks]), whole.samples[i])


def test_byte_mutations_never_crash(tmp_path):
    rng = np.random.default_rng(5)
    signals = SignalMatrix.from_array(["Fp1", "Cz"], 32, rng.normal(0, 30, (2, 32 * 4)))
    path = tmp_path / "valid.edf"
    write_edf(header_for(signals, reserved="EDF+C"), signals, path)
    raw = path.read_bytes()
    mutated = tmp_path / "mutated.edf"
    errors = 0
    for _ in range(1000):
        data = bytearray(raw)
        position = int(rng.integers(0, len(data)))
        data[position] = int(rng.integers(0, 256))
        mutated.write_bytes(bytes(data))
        try:
            read_edf(mutated)
        except SzBenchError:
            errors += 1
    assert 0 < errors < 1000
