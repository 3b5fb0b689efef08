from __future__ import annotations

import csv
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from ..errors import ContractError, FormatError


@dataclass
class Recording:
    """Multichannel EEG for one file.

    ``samples`` is ``C x T``; ``annotations`` are ``(onset_s, offset_s)``
    seizure intervals relative to the start of this recording, and
    ``start_s`` places the recording on its subject's timeline.
    """

    id: str
    sample_rate: float
    samples: np.ndarray
    annotations: list[tuple[float, float]] = field(default_factory=list)
    start_s: float = 0.0
    channel_labels: list[str] | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ContractError(f"{self.id}: samples must be C x T, got {self.samples.shape}")
        if not self.sample_rate > 0:
            raise ContractError(f"{self.id}: sample rate must be positive")
        self.annotations = sorted((float(a), float(b)) for a, b in self.annotations)
        prev_end = -np.inf
        for onset, offset in self.annotations:
            if offset < onset or onset < prev_end:
                raise ContractError(f"{self.id}: seizure annotations overlap or are inverted")
            if onset < 0 or offset > self.duration_s + 1e-9:
                raise ContractError(f"{self.id}: annotation ({onset}, {offset}) outside the recording")
            prev_end = offset

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


ANNOTATION_FIELDS = ("recording_id", "onset_s", "offset_s")


def read_annotations(path: str | PathLike) -> dict[str, list[tuple[float, float]]]:
    """Read a ``recording_id,onset_s,offset_s`` sidecar."""
    out: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[0].strip() == "recording_id"):
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                onset, offset = float(row[1]), float(row[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric time") from exc
            out.setdefault(row[0].strip(), []).append((onset, offset))
    return out


def write_annotations(path: str | PathLike, recordings: list[Recording]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_FIELDS)
        for rec in recordings:
            for onset, offset in rec.annotations:
                writer.writerow([rec.id, _num(onset), _num(offset)])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def load_subject(directory: str | PathLike, annotations: str | PathLike | None = None) -> list[Recording]:
    """Read every ``*.edf`` in ``directory`` plus the annotation sidecar
    (``annotations.csv`` by default) and place the recordings on a common
    timeline from their EDF start date/time."""
    from .edf import read_edf_with_start

    directory = Path(directory)
    files = sorted(directory.glob("*.edf"))
    if not files:
        raise FormatError(f"no .edf files in {directory}")
    ann_path = Path(annotations) if annotations else directory / "annotations.csv"
    ann = read_annotations(ann_path) if ann_path.exists() else {}
    loaded = [read_edf_with_start(f) for f in files]
    origin = min(start for _, start in loaded)
    recs = []
    for rec, start in loaded:
        rec.start_s = (start - origin).total_seconds()
        rec.annotations = ann.get(rec.id, [])
        rec.__post_init__()
        recs.append(rec)
    unknown = set(ann) - {r.id for r in recs}
    if unknown:
        raise FormatError(f"annotations reference unknown recordings: {sorted(unknown)}")
    return recs
