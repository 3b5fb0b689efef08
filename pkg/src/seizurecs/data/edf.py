"""Reader and writer for the EDF subset used by scalp-EEG corpora: 16-bit
samples, one sample rate across the selected channels, no EDF+ features.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from os import PathLike
from pathlib import Path

import numpy as np

from ..errors import FormatError, UnsupportedFileError
from .recording import Recording

ANNOTATION_LABEL = "EDF Annotations"

# (name, width) of the fixed part, then of each per-signal block
_FIXED = (
    ("version", 8),
    ("patient", 80),
    ("recording", 80),
    ("startdate", 8),
    ("starttime", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("n_records", 8),
    ("record_duration", 8),
    ("n_signals", 4),
)
_PER_SIGNAL = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


@dataclass
class EdfHeader:
    start: dt.datetime
    n_records: int
    record_duration: float
    labels: list[str]
    physical_min: np.ndarray
    physical_max: np.ndarray
    digital_min: np.ndarray
    digital_max: np.ndarray
    samples_per_record: np.ndarray
    header_bytes: int

    @property
    def n_signals(self) -> int:
        return len(self.labels)

    def scale_offset(self) -> tuple[np.ndarray, np.ndarray]:
        scale = (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)
        return scale, self.physical_min - scale * self.digital_min


def _field(raw: bytes, offset: int, width: int, name: str) -> str:
    if offset + width > len(raw):
        raise FormatError(f"header truncated in field {name!r}", offset=len(raw))
    return raw[offset : offset + width].decode("ascii", errors="replace").strip()


def _number(text: str, kind, name: str, offset: int):
    try:
        return kind(text)
    except ValueError:
        raise FormatError(f"field {name!r} is not a valid number: {text!r}", offset=offset) from None


def parse_header(raw: bytes) -> EdfHeader:
    pos = 0
    fixed = {}
    offsets = {}
    for name, width in _FIXED:
        offsets[name] = pos
        fixed[name] = _field(raw, pos, width, name)
        pos += width
    if fixed["version"] != "0":
        raise FormatError(f"unsupported EDF version {fixed['version']!r}", offset=0)
    header_bytes = _number(fixed["header_bytes"], int, "header_bytes", offsets["header_bytes"])
    n_records = _number(fixed["n_records"], int, "n_records", offsets["n_records"])
    duration = _number(fixed["record_duration"], float, "record_duration", offsets["record_duration"])
    ns = _number(fixed["n_signals"], int, "n_signals", offsets["n_signals"])
    if ns < 1:
        raise FormatError("no signals declared", offset=offsets["n_signals"])
    if header_bytes != 256 * (ns + 1):
        raise FormatError(f"header size {header_bytes} inconsistent with {ns} signals", offset=offsets["header_bytes"])
    if duration <= 0:
        raise FormatError("record duration must be positive", offset=offsets["record_duration"])
    start = _parse_start(fixed["startdate"], fixed["starttime"], offsets["startdate"])

    per = {}
    for name, width in _PER_SIGNAL:
        values = []
        for i in range(ns):
            text = _field(raw, pos, width, name)
            if name in ("physical_min", "physical_max"):
                text = _number(text, float, name, pos)
            elif name in ("digital_min", "digital_max", "samples_per_record"):
                text = _number(text, int, name, pos)
            values.append(text)
            pos += width
        per[name] = values

    hdr = EdfHeader(
        start=start,
        n_records=n_records,
        record_duration=duration,
        labels=per["label"],
        physical_min=np.array(per["physical_min"], dtype=np.float64),
        physical_max=np.array(per["physical_max"], dtype=np.float64),
        digital_min=np.array(per["digital_min"], dtype=np.float64),
        digital_max=np.array(per["digital_max"], dtype=np.float64),
        samples_per_record=np.array(per["samples_per_record"], dtype=np.int64),
        header_bytes=header_bytes,
    )
    bad = np.flatnonzero(hdr.digital_max <= hdr.digital_min)
    if bad.size:
        raise FormatError(f"signal {bad[0]}: digital max not above digital min", offset=256)
    if np.any(hdr.samples_per_record < 1):
        raise FormatError("samples per record must be positive", offset=256)
    return hdr


def _parse_start(date: str, time: str, offset: int) -> dt.datetime:
    try:
        dd, mm, yy = (int(p) for p in date.split("."))
        hh, mi, ss = (int(p) for p in time.split("."))
    except ValueError:
        raise FormatError(f"bad start date/time {date!r} {time!r}", offset=offset) from None
    year = 1900 + yy if yy >= 85 else 2000 + yy
    try:
        return dt.datetime(year, mm, dd, hh, mi, ss)
    except ValueError:
        raise FormatError(f"bad start date/time {date!r} {time!r}", offset=offset) from None


def read_edf_digital(path: str | PathLike) -> tuple[EdfHeader, list[np.ndarray]]:
    """Header plus the raw int16 samples of every signal."""
    raw = Path(path).read_bytes()
    hdr = parse_header(raw)
    record_samples = int(hdr.samples_per_record.sum())
    record_bytes = 2 * record_samples
    body = len(raw) - hdr.header_bytes
    if hdr.n_records < 0:
        hdr.n_records = body // record_bytes
    needed = hdr.n_records * record_bytes
    if body < needed:
        raise FormatError(
            f"data truncated: {hdr.n_records} records need {needed} bytes, found {max(body, 0)}", offset=len(raw)
        )
    data = np.frombuffer(raw, dtype="<i2", count=hdr.n_records * record_samples, offset=hdr.header_bytes)
    data = data.reshape(hdr.n_records, record_samples)
    signals = []
    pos = 0
    for n in hdr.samples_per_record:
        signals.append(data[:, pos : pos + n].reshape(-1).copy())
        pos += n
    return hdr, signals


def read_edf_with_start(path: str | PathLike, channels: list[str] | None = None) -> tuple[Recording, dt.datetime]:
    hdr, digital = read_edf_digital(path)
    wanted = [
        i
        for i, label in enumerate(hdr.labels)
        if label != ANNOTATION_LABEL and (channels is None or label in channels)
    ]
    if not wanted:
        raise UnsupportedFileError(f"{path}: no signal channels selected")
    rates = hdr.samples_per_record[wanted] / hdr.record_duration
    if np.any(rates != rates[0]):
        raise UnsupportedFileError(f"{path}: channels have different sample rates {sorted(set(rates.tolist()))}")
    scale, offset = hdr.scale_offset()
    samples = np.stack([digital[i] * scale[i] + offset[i] for i in wanted])
    rec = Recording(
        id=Path(path).stem,
        sample_rate=float(rates[0]),
        samples=samples,
        channel_labels=[hdr.labels[i] for i in wanted],
    )
    return rec, hdr.start


def read_edf(path: str | PathLike, channels: list[str] | None = None) -> Recording:
    """Read an EDF file into a :class:`Recording` in physical units."""
    return read_edf_with_start(path, channels)[0]


def _pad(value, width: int) -> bytes:
    text = value if isinstance(value, str) else _compact(value)
    if len(text) > width:
        raise FormatError(f"value {text!r} does not fit in {width} characters")
    return text.ljust(width).encode("ascii")


def _compact(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    text = repr(float(x))
    if len(text) <= 8:
        return text
    return f"{float(x):.8g}"[:8]


def write_edf_digital(
    path: str | PathLike,
    digital: np.ndarray,
    sample_rate: int,
    physical_min,
    physical_max,
    labels: list[str] | None = None,
    start: dt.datetime | None = None,
    digital_min: int = -32768,
    digital_max: int = 32767,
    record_seconds: int = 1,
) -> None:
    """Write int16 samples ``C x T``; ``T`` must fill whole data records."""
    digital = np.asarray(digital)
    c, t = digital.shape
    per_record = int(round(sample_rate * record_seconds))
    if t % per_record:
        raise FormatError(f"{t} samples do not fill whole {record_seconds}-s records")
    n_records = t // per_record
    start = start or dt.datetime(2000, 1, 1)
    labels = labels or [f"CH{i + 1}" for i in range(c)]
    pmin = np.broadcast_to(np.asarray(physical_min, dtype=np.float64), (c,))
    pmax = np.broadcast_to(np.asarray(physical_max, dtype=np.float64), (c,))
    for v in np.concatenate([pmin, pmax]):
        if float(_compact(v)) != v:
            raise FormatError(f"physical bound {v!r} is not representable in 8 characters")

    head = b"".join(
        [
            _pad("0", 8),
            _pad("X X X X", 80),
            _pad("Startdate X X X X", 80),
            _pad(start.strftime("%d.%m.%y"), 8),
            _pad(start.strftime("%H.%M.%S"), 8),
            _pad(256 * (c + 1), 8),
            _pad("", 44),
            _pad(n_records, 8),
            _pad(record_seconds, 8),
            _pad(c, 4),
        ]
    )
    blocks = [
        [_pad(lbl, 16) for lbl in labels],
        [_pad("", 80)] * c,
        [_pad("uV", 8)] * c,
        [_pad(v, 8) for v in pmin],
        [_pad(v, 8) for v in pmax],
        [_pad(digital_min, 8)] * c,
        [_pad(digital_max, 8)] * c,
        [_pad("", 80)] * c,
        [_pad(per_record, 8)] * c,
        [_pad("", 32)] * c,
    ]
    head += b"".join(b"".join(block) for block in blocks)
    body = digital.astype("<i2").reshape(c, n_records, per_record).transpose(1, 0, 2).tobytes()
    Path(path).write_bytes(head + body)


def _nice_ceiling(x: float) -> float:
    """Smallest 3-significant-digit value >= x (at least 1e-3), so that
    +/- the value fits the 8-character header field exactly."""
    x = max(x, 1e-3)
    e = math.floor(math.log10(x))
    step = 10.0 ** (e - 2)
    return round(math.ceil(x / step - 1e-9) * step, max(0, 2 - e))


def write_edf(
    path: str | PathLike,
    rec: Recording,
    start: dt.datetime | None = None,
    physical_range: tuple[float, float] | None = None,
) -> None:
    """Quantize a recording to 16 bits and write it.

    The physical range defaults to a symmetric range covering every sample.
    """
    if not float(rec.sample_rate).is_integer():
        raise FormatError("writer needs an integer sample rate")
    if physical_range is None:
        peak = float(np.abs(rec.samples).max()) if rec.samples.size else 0.0
        physical_range = (-_nice_ceiling(peak), _nice_ceiling(peak))
    lo, hi = physical_range
    dmin, dmax = -32768, 32767
    scale = (dmax - dmin) / (hi - lo)
    digital = np.clip(np.round((rec.samples - lo) * scale + dmin), dmin, dmax).astype(np.int16)
    write_edf_digital(
        path, digital, int(rec.sample_rate), lo, hi, labels=rec.channel_labels, start=start, digital_min=dmin, digital_max=dmax
    )
