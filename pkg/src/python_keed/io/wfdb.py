"""WFDB headers, signal formats 212 and 16, and MIT-format annotation streams."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from python_keed.core import FiducialAnnotation, ReferenceAnnotations, TimeSeriesRecord, WAVE_KINDS
from python_keed.errors import DataError
from python_keed.utils import to_signed, to_unsigned

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = (212, 16)
DEFAULT_GAIN = 200.0

# MIT annotation pseudo-codes
SKIP = 59
NUM = 60
SUB = 61
CHAN = 62
AUX = 63

# Standard MIT annotation codes used by the reference conversion
NORMAL = 1
PWAVE = 24
TWAVE = 27
WFON = 39
WFOFF = 40
BEAT_CODES = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 38)


@dataclass(frozen=True)
class WfdbSignal:
    """One signal line of a WFDB header.

    Attributes:
        file_name: Signal file holding the samples
        fmt: Storage format code (212 or 16)
        gain: ADC units per physical unit
        baseline: ADC value of physical zero
        units: Physical units label
        lead: Signal description (lead name)
    """
    file_name: str
    fmt: int
    gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    lead: str = ""


@dataclass(frozen=True)
class WfdbHeader:
    record_name: str
    n_signals: int
    fs: float
    n_samples: int
    signals: Tuple[WfdbSignal, ...]


@dataclass(frozen=True)
class WfdbAnnotation:
    """A decoded annotation: absolute sample, type code and optional modifiers."""
    sample_index: int
    type_code: int
    aux: str | None = None
    subtype: int = 0
    chan: int = 0
    num: int = 0


def _parse_gain(token: str) -> Tuple[float, int | None, str]:
    units = "mV"
    if "/" in token:
        token, units = token.split("/", 1)
    baseline = None
    if "(" in token:
        token, rest = token.split("(", 1)
        baseline = int(rest.rstrip(")"))
    gain = float(token) if token else 0.0
    return (gain if gain > 0 else DEFAULT_GAIN), baseline, units


def parse_header(text: str) -> WfdbHeader:
    """Parse the supported subset of a WFDB header.

    Record line: ``name n_sigs fs n_samples``; signal lines:
    ``file format gain(baseline)/units adcres adczero initval checksum blocksize lead``.
    Comment lines (``#``) are skipped.
    """
    lines = [line.strip() for line in text.splitlines()]
    lines = [line for line in lines if line and not line.startswith("#")]
    if not lines:
        raise DataError("Empty WFDB header")
    tokens = lines[0].split()
    if len(tokens) < 2:
        raise DataError(f"Malformed record line: {lines[0]!r}")
    record_name = tokens[0]
    if "/" in record_name:
        raise DataError(f"Multi-segment record {record_name!r} is not supported")
    try:
        n_signals = int(tokens[1])
        fs = float(tokens[2].split("/")[0].split("(")[0]) if len(tokens) > 2 else 250.0
        n_samples = int(tokens[3]) if len(tokens) > 3 else 0
    except ValueError as err:
        raise DataError(f"Malformed record line: {lines[0]!r}") from err
    if n_signals < 1:
        raise DataError(f"Record {record_name!r} declares no signals")
    if fs <= 0:
        raise DataError(f"Record {record_name!r} has non-positive sampling rate {fs}")
    if len(lines) < 1 + n_signals:
        raise DataError(f"Header declares {n_signals} signals but has {len(lines) - 1} signal lines")

    signals = []
    for index, line in enumerate(lines[1:1 + n_signals]):
        parts = line.split()
        if len(parts) < 2:
            raise DataError(f"Malformed signal line: {line!r}")
        fmt_token = parts[1]
        digits = fmt_token[:len(fmt_token) - len(fmt_token.lstrip("0123456789"))]
        if not digits:
            raise DataError(f"Malformed format code in {line!r}")
        fmt = int(digits)
        if fmt not in SUPPORTED_FORMATS:
            raise DataError(f"Unsupported signal format {fmt} (supported: {SUPPORTED_FORMATS})")
        try:
            gain, baseline, units = _parse_gain(parts[2]) if len(parts) > 2 else (DEFAULT_GAIN, None, "mV")
            adc_zero = int(parts[4]) if len(parts) > 4 else 0
        except ValueError as err:
            raise DataError(f"Malformed gain or ADC fields in {line!r}") from err
        lead = " ".join(parts[8:]) if len(parts) > 8 else f"sig{index}"
        signals.append(WfdbSignal(
            file_name=parts[0], fmt=fmt, gain=gain,
            baseline=adc_zero if baseline is None else baseline, units=units, lead=lead))
    return WfdbHeader(record_name, n_signals, fs, n_samples, tuple(signals))


def decode_212(data: bytes, n_values: int) -> np.ndarray:
    """Unpack 12-bit two's complement pairs stored in 3 bytes each.

    s1 = byte0 | (low nibble of byte1) << 8, s2 = byte2 | (high nibble of byte1) << 8.
    """
    needed = (3 * n_values + 1) // 2
    if len(data) < needed:
        raise DataError(f"Truncated format-212 data: {len(data)} bytes for {n_values} samples (need {needed})")
    raw = np.frombuffer(bytes(data[:needed]) + b"\x00" * (-needed % 3), dtype=np.uint8).astype(np.int64)
    frames = raw.reshape(-1, 3)
    first = frames[:, 0] | ((frames[:, 1] & 0x0F) << 8)
    second = frames[:, 2] | ((frames[:, 1] & 0xF0) << 4)
    values = np.empty(2 * len(frames), dtype=np.int64)
    values[0::2] = first
    values[1::2] = second
    return to_signed(values[:n_values], 12)


def encode_212(values: Sequence[int]) -> bytes:
    """Pack 12-bit samples into format 212; an odd tail occupies two bytes."""
    values = np.asarray(values, dtype=np.int64)
    if np.any(values < -2048) or np.any(values > 2047):
        raise DataError("Format 212 holds 12-bit values in [-2048, 2047]")
    n = values.size
    unsigned = to_unsigned(np.concatenate([values, np.zeros(n % 2, dtype=np.int64)]), 12)
    first, second = unsigned[0::2], unsigned[1::2]
    frames = np.stack([first & 0xFF, ((first >> 8) & 0x0F) | ((second >> 8) << 4), second & 0xFF], axis=1)
    return frames.astype(np.uint8).tobytes()[:(3 * n + 1) // 2]


def decode_16(data: bytes, n_values: int) -> np.ndarray:
    needed = 2 * n_values
    if len(data) < needed:
        raise DataError(f"Truncated format-16 data: {len(data)} bytes for {n_values} samples (need {needed})")
    return np.frombuffer(bytes(data[:needed]), dtype="<i2").astype(np.int64)


def encode_16(values: Sequence[int]) -> bytes:
    values = np.asarray(values, dtype=np.int64)
    if np.any(values < -32768) or np.any(values > 32767):
        raise DataError("Format 16 holds values in [-32768, 32767]")
    return values.astype("<i2").tobytes()


def read_wfdb_record(header_text: str, signal_bytes: bytes, lead_index: int = 0) -> TimeSeriesRecord:
    """Decode one lead of a WFDB record into physical units.

    ``signal_bytes`` is the content of the signal file holding the lead; signals
    sharing that file are interleaved frame by frame.
    """
    header = parse_header(header_text)
    if not 0 <= lead_index < header.n_signals:
        raise DataError(f"Lead index {lead_index} out of range for {header.n_signals} signals")
    signal = header.signals[lead_index]
    group = [s for s in header.signals if s.file_name == signal.file_name]
    if any(s.fmt != signal.fmt for s in group):
        raise DataError(f"Mixed formats within signal file {signal.file_name!r}")
    position = group.index(signal)
    width = len(group)

    n_samples = header.n_samples
    if n_samples <= 0:
        per_frame = 1.5 * width if signal.fmt == 212 else 2.0 * width
        n_samples = int(len(signal_bytes) // per_frame)
    n_values = n_samples * width
    if signal.fmt == 212:
        adc = decode_212(signal_bytes, n_values)
    else:
        adc = decode_16(signal_bytes, n_values)
    adc = adc.reshape(n_samples, width)[:, position]
    samples = (adc - signal.baseline) / signal.gain
    logger.debug("Read %d samples of %s lead %s at %g Hz", n_samples, header.record_name, signal.lead, header.fs)
    return TimeSeriesRecord(samples, header.fs, record_id=header.record_name, lead=signal.lead)


def write_wfdb_record(record: TimeSeriesRecord, fmt: int = 212, gain: float = DEFAULT_GAIN,
                      baseline: int = 0) -> Tuple[str, bytes]:
    """Quantize a record and return (header text, signal bytes) for a single-signal file."""
    if fmt not in SUPPORTED_FORMATS:
        raise DataError(f"Unsupported signal format {fmt} (supported: {SUPPORTED_FORMATS})")
    adc = np.round(record.samples * gain).astype(np.int64) + baseline
    data = encode_212(adc) if fmt == 212 else encode_16(adc)
    file_name = f"{record.record_id}.dat"
    lead = record.lead or "ECG"
    header = (f"{record.record_id} 1 {record.fs:g} {len(record)}\n"
              f"{file_name} {fmt} {gain:g}({baseline})/mV {12 if fmt == 212 else 16} {baseline} 0 0 0 {lead}\n")
    return header, data


def read_wfdb_annotations(data: bytes) -> List[WfdbAnnotation]:
    """Decode an MIT-format annotation stream.

    Each little-endian word holds ``type = w >> 10`` and ``delta = w & 0x3FF``.
    SKIP words carry a 32-bit interval in the two following words (high half
    first); NUM/SUB/CHAN/AUX words modify the preceding annotation.
    """
    if len(data) % 2:
        raise DataError(f"Annotation stream has odd length {len(data)}")
    words = np.frombuffer(bytes(data), dtype="<u2").astype(np.int64)
    annotations: List[WfdbAnnotation] = []
    time = 0
    i = 0
    while True:
        if i >= words.size:
            raise DataError("Truncated annotation stream: missing terminator")
        word = int(words[i])
        if word == 0:
            break
        code, delta = word >> 10, word & 0x3FF
        if code == SKIP:
            if i + 2 >= words.size:
                raise DataError("Truncated annotation stream inside a SKIP")
            interval = to_signed((int(words[i + 1]) << 16) | int(words[i + 2]), 32)
            time += interval
            if time < 0:
                raise DataError(f"Negative cumulative annotation time {time}")
            i += 3
            continue
        if code in (NUM, SUB, CHAN):
            if annotations:
                key = {NUM: "num", SUB: "subtype", CHAN: "chan"}[code]
                annotations[-1] = replace(annotations[-1], **{key: delta})
            i += 1
            continue
        if code == AUX:
            n_words = math.ceil(delta / 2)
            if i + 1 + n_words > words.size:
                raise DataError("Truncated annotation stream inside an AUX string")
            raw = words[i + 1:i + 1 + n_words].astype("<u2").tobytes()[:delta]
            if annotations:
                annotations[-1] = replace(annotations[-1], aux=raw.decode("latin-1").rstrip("\x00"))
            i += 1 + n_words
            continue
        time += delta
        annotations.append(WfdbAnnotation(sample_index=time, type_code=code))
        i += 1
    return annotations


def encode_wfdb_annotations(annotations: Iterable[WfdbAnnotation]) -> bytes:
    """Encode annotations in MIT format; deltas beyond 10 bits go through SKIP."""
    words: List[int] = []
    previous = 0
    for annotation in annotations:
        if not 0 < annotation.type_code < SKIP:
            raise DataError(f"Type code {annotation.type_code} cannot be stored as an annotation")
        delta = annotation.sample_index - previous
        if 0 <= delta <= 0x3FF:
            words.append((annotation.type_code << 10) | delta)
        else:
            interval = int(to_unsigned(np.array([delta]), 32)[0])
            words.extend([SKIP << 10, interval >> 16, interval & 0xFFFF, annotation.type_code << 10])
        for code, value in ((NUM, annotation.num), (SUB, annotation.subtype), (CHAN, annotation.chan)):
            if value:
                words.append((code << 10) | (value & 0x3FF))
        if annotation.aux:
            raw = annotation.aux.encode("latin-1")
            words.append((AUX << 10) | len(raw))
            padded = raw + b"\x00" * (len(raw) % 2)
            words.extend(np.frombuffer(padded, dtype="<u2").tolist())
        previous = annotation.sample_index
    words.append(0)
    return np.asarray(words, dtype="<u2").tobytes()


def annotations_to_reference(annotations: Sequence[WfdbAnnotation], wave_codes: Mapping[int, str],
                             beat_codes: Sequence[int] = BEAT_CODES, onset_code: int = WFON,
                             offset_code: int = WFOFF) -> ReferenceAnnotations:
    """Turn an annotation stream into R peaks and wave fiducials.

    ``wave_codes`` maps a type code to a wave ("P" or "T"); onset/offset
    bracket codes attach to the nearest following/preceding wave-peak annotation.
    """
    rpeaks = sorted({a.sample_index for a in annotations if a.type_code in beat_codes})
    fiducials: List[FiducialAnnotation] = []
    ordered = sorted(annotations, key=lambda a: a.sample_index)
    for position, annotation in enumerate(ordered):
        wave = wave_codes.get(annotation.type_code)
        if wave is None:
            continue
        if wave not in WAVE_KINDS:
            raise DataError(f"Annotation code {annotation.type_code} maps to unknown wave {wave!r}")
        onset_kind, peak_kind, offset_kind = WAVE_KINDS[wave]
        fiducials.append(FiducialAnnotation(peak_kind, annotation.sample_index))
        if position > 0 and ordered[position - 1].type_code == onset_code:
            fiducials.append(FiducialAnnotation(onset_kind, ordered[position - 1].sample_index))
        if position + 1 < len(ordered) and ordered[position + 1].type_code == offset_code:
            fiducials.append(FiducialAnnotation(offset_kind, ordered[position + 1].sample_index))
    return ReferenceAnnotations(np.array(rpeaks, dtype=np.int64), tuple(fiducials))
