"""Labeled 20-second windows, training-fold normalization and five-fold
cross-validation splits."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from os import PathLike
from pathlib import Path

import numpy as np

from ..errors import ContractError, FormatError
from .labels import INTERICTAL, PREICTAL, LabeledInterval, Timeline, label_regions
from .recording import Recording

WINDOW_S = 20.0
INTERICTAL_STRIDE_S = 20.0
PREICTAL_STRIDE_S = 15.0
STD_FLOOR = 1e-8

DATA_MAGIC = b"C2SPDATA"
DATA_VERSION = 1
_DATA_HEADER = struct.Struct("<8sBIIId")


@dataclass(frozen=True)
class WindowedDataset:
    """``windows`` is ``n x N x C``; the other arrays are per window.

    ``norm_mean``/``norm_std`` hold the per-channel statistics that were
    applied, if the windows are normalized.
    """

    windows: np.ndarray
    labels: np.ndarray
    recording_index: np.ndarray
    start_sample: np.ndarray
    recording_ids: tuple[str, ...]
    sample_rate: float
    start_s: np.ndarray | None = None
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.windows)
        for name in ("labels", "recording_index", "start_sample"):
            if len(getattr(self, name)) != n:
                raise ContractError(f"{name} has {len(getattr(self, name))} entries for {n} windows")
        for arr in (self.windows, self.labels, self.recording_index, self.start_sample, self.start_s):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def n_samples(self) -> int:
        return self.windows.shape[1]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[2]

    def class_counts(self) -> dict[int, int]:
        return {INTERICTAL: int(np.sum(self.labels == INTERICTAL)), PREICTAL: int(np.sum(self.labels == PREICTAL))}

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            windows=self.windows[idx],
            labels=self.labels[idx],
            recording_index=self.recording_index[idx],
            start_sample=self.start_sample[idx],
            start_s=None if self.start_s is None else self.start_s[idx],
        )

    def channels_first(self, idx=None) -> np.ndarray:
        """Windows as ``B x C x N`` network input."""
        w = self.windows if idx is None else self.windows[idx]
        return np.ascontiguousarray(w.transpose(0, 2, 1))


def window_count(duration_s: float, stride_s: float, window_s: float = WINDOW_S) -> int:
    if duration_s < window_s:
        return 0
    return int(math.floor((duration_s - window_s) / stride_s + 1e-9)) + 1


def _to_sample(t: float, rate: float, up: bool) -> int:
    x = t * rate
    nearest = round(x)
    if abs(x - nearest) < 1e-6:
        return int(nearest)
    return math.ceil(x) if up else math.floor(x)


def extract_windows(
    intervals: list[LabeledInterval],
    recordings: list[Recording],
    window_s: float = WINDOW_S,
    interictal_stride_s: float = INTERICTAL_STRIDE_S,
    preictal_stride_s: float = PREICTAL_STRIDE_S,
) -> WindowedDataset:
    """Slide fixed windows through each labeled interval.

    Interictal windows do not overlap; preictal windows step by 15 s (25 %
    overlap). Every window lies wholly inside its interval.
    """
    by_id = {r.id: r for r in recordings}
    rec_order = [r.id for r in recordings]
    rates = {r.sample_rate for r in recordings}
    if len(rates) != 1:
        raise ContractError(f"recordings have different sample rates: {sorted(rates)}")
    rate = rates.pop()
    channels = {r.n_channels for r in recordings}
    if len(channels) != 1:
        raise ContractError("recordings have different channel counts")
    width = _to_sample(window_s, rate, True)
    strides = {
        INTERICTAL: _to_sample(interictal_stride_s, rate, True),
        PREICTAL: _to_sample(preictal_stride_s, rate, True),
    }

    chunks, labels, rec_idx, starts, start_s = [], [], [], [], []
    for iv in intervals:
        rec = by_id[iv.recording_id]
        a = _to_sample(iv.start_s - rec.start_s, rate, up=True)
        b = min(_to_sample(iv.end_s - rec.start_s, rate, up=False), rec.n_samples)
        if b - a < width:
            continue
        first = np.arange(a, b - width + 1, strides[iv.label], dtype=np.int64)
        for s in first:
            chunks.append(rec.samples[:, s : s + width].T)
        labels.extend([iv.label] * len(first))
        rec_idx.extend([rec_order.index(rec.id)] * len(first))
        starts.append(first)
        start_s.append(rec.start_s + first / rate)

    n_ch = channels.pop()
    windows = np.stack(chunks) if chunks else np.zeros((0, width, n_ch))
    return WindowedDataset(
        windows=windows,
        labels=np.asarray(labels, dtype=np.int8),
        recording_index=np.asarray(rec_idx, dtype=np.int64),
        start_sample=np.concatenate(starts) if starts else np.zeros(0, dtype=np.int64),
        recording_ids=tuple(rec_order),
        sample_rate=float(rate),
        start_s=np.concatenate(start_s) if start_s else np.zeros(0),
    )


def build_dataset(recordings: list[Recording], **kwargs) -> WindowedDataset:
    """Timeline -> lead seizures -> labeled regions -> windows."""
    timeline = Timeline.from_recordings(recordings)
    return extract_windows(label_regions(timeline), recordings, **kwargs)


def channel_stats(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass per-channel mean and standard deviation over ``n x N x C``."""
    mean = windows.mean(axis=(0, 1))
    std = np.sqrt(((windows - mean) ** 2).mean(axis=(0, 1)))
    return mean, np.maximum(std, STD_FLOOR)


def apply_normalization(ds: WindowedDataset, mean: np.ndarray, std: np.ndarray) -> WindowedDataset:
    mean = np.asarray(mean, dtype=np.float64)
    std = np.maximum(np.asarray(std, dtype=np.float64), STD_FLOOR)
    return replace(ds, windows=(ds.windows - mean) / std, norm_mean=mean.copy(), norm_std=std.copy())


def normalize(ds: WindowedDataset, train_idx) -> WindowedDataset:
    """Z-score every window with statistics from the training windows only."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ContractError("normalization needs at least one training window")
    mean, std = channel_stats(ds.windows[train_idx])
    return apply_normalization(ds, mean, std)


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def five_fold_split(n: int, seed: int, k: int = 5, val_fraction: float = 0.2) -> list[Split]:
    """Seeded partition of ``range(n)`` into ``k`` test folds of sizes within
    one of each other; the remaining windows are split again into training
    and validation sets."""
    if n < k:
        raise ContractError(f"need at least {k} windows for {k}-fold splitting, got {n}")
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(n), k)
    splits = []
    for i in range(k):
        rest = np.concatenate([folds[j] for j in range(k) if j != i])
        rest = np.random.default_rng([seed, i]).permutation(rest)
        n_val = int(round(val_fraction * len(rest)))
        if len(rest) > 1:
            n_val = min(max(n_val, 1), len(rest) - 1)
        splits.append(Split(train=np.sort(rest[n_val:]), val=np.sort(rest[:n_val]), test=np.sort(folds[i])))
    return splits


# -- cache container -------------------------------------------------------------


def save_dataset(ds: WindowedDataset, path: str | PathLike) -> None:
    """Write the raw windows: header, recording names, then per window
    ``label u8 | recording u32 | start sample u64 | N x C float64``."""
    n, length, c = ds.windows.shape
    names = "\n".join(ds.recording_ids).encode("utf-8")
    head = _DATA_HEADER.pack(DATA_MAGIC, DATA_VERSION, n, length, c, ds.sample_rate)
    rec = np.empty(n, dtype=_record_dtype(length, c))
    rec["label"] = ds.labels
    rec["recording"] = ds.recording_index
    rec["start"] = ds.start_sample
    rec["x"] = ds.windows
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(struct.pack("<I", len(names)))
        fh.write(names)
        fh.write(rec.tobytes())


def _record_dtype(length: int, c: int) -> np.dtype:
    return np.dtype([("label", "u1"), ("recording", "<u4"), ("start", "<u8"), ("x", "<f8", (length, c))])


def load_dataset(path: str | PathLike) -> WindowedDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _DATA_HEADER.size + 4:
        raise FormatError("dataset file shorter than its header", offset=len(raw))
    magic, version, n, length, c, rate = _DATA_HEADER.unpack_from(raw)
    if magic != DATA_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != DATA_VERSION:
        raise FormatError(f"unsupported dataset version {version}", offset=8)
    pos = _DATA_HEADER.size
    (name_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if pos + name_len > len(raw):
        raise FormatError("recording-name block truncated", offset=len(raw))
    names = raw[pos : pos + name_len].decode("utf-8")
    pos += name_len
    dtype = _record_dtype(length, c)
    if len(raw) - pos != n * dtype.itemsize:
        raise FormatError(f"expected {n} windows of {dtype.itemsize} bytes", offset=pos + min(len(raw) - pos, n * dtype.itemsize))
    rec = np.frombuffer(raw, dtype=dtype, count=n, offset=pos)
    ids = tuple(names.split("\n")) if names else ()
    if n and rec["recording"].max() >= len(ids):
        raise FormatError("window refers to an unknown recording", offset=pos)
    start_sample = rec["start"].astype(np.int64)
    rec_index = rec["recording"].astype(np.int64)
    return WindowedDataset(
        windows=rec["x"].astype(np.float64),
        labels=rec["label"].astype(np.int8),
        recording_index=rec_index,
        start_sample=start_sample,
        recording_ids=ids,
        sample_rate=float(rate),
    )
