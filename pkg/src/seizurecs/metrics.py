"""Prediction and reconstruction metrics, and the per-fold report."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from os import PathLike
from typing import Sequence

import numpy as np

from .errors import DimensionError

logger = logging.getLogger(__name__)

WINDOW_SECONDS = 20.0


@dataclass(frozen=True)
class ClassifyMetrics:
    accuracy: float
    sensitivity: float | None
    fpr_per_hour: float | None
    tp: int
    tn: int
    fp: int
    fn: int
    interictal_hours: float


def classify_metrics(predictions, labels, window_seconds: float = WINDOW_SECONDS) -> ClassifyMetrics:
    """Window-level confusion counts with preictal (1) as the positive class.

    FPR is false positives per hour of interictal data evaluated. Undefined
    quantities (no positives, no interictal windows) come back as ``None``.
    """
    pred = np.asarray(predictions).astype(np.int64).reshape(-1)
    true = np.asarray(labels).astype(np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise DimensionError(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise DimensionError("no predictions to score")
    tp = int(np.sum((pred == 1) & (true == 1)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    negatives = tn + fp
    hours = negatives * window_seconds / 3600.0
    return ClassifyMetrics(
        accuracy=(tp + tn) / pred.size,
        sensitivity=tp / (tp + fn) if tp + fn else None,
        fpr_per_hour=fp / hours if negatives else None,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        interictal_hours=hours,
    )


def _check_pair(x, x_hat) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionError(f"signal shapes differ: {x.shape} vs {x_hat.shape}")
    if x.ndim == 1:
        x, x_hat = x[:, None], x_hat[:, None]
    return x, x_hat


def pcc(x, x_hat) -> float | None:
    """Channel-averaged Pearson correlation of ``N x C`` signals.

    Channels that are constant in either signal are skipped; ``None`` when
    every channel is skipped.
    """
    x, x_hat = _check_pair(x, x_hat)
    dx = x - x.mean(axis=0)
    dy = x_hat - x_hat.mean(axis=0)
    sx = np.sqrt((dx**2).sum(axis=0))
    sy = np.sqrt((dy**2).sum(axis=0))
    ok = (sx > 0) & (sy > 0)
    if not ok.all():
        logger.info("pcc: skipping %d constant channel(s)", int((~ok).sum()))
    if not ok.any():
        return None
    r = (dx[:, ok] * dy[:, ok]).sum(axis=0) / (sx[ok] * sy[ok])
    return float(np.clip(r, -1.0, 1.0).mean())


def mse(x, x_hat) -> float:
    x, x_hat = _check_pair(x, x_hat)
    return float(((x - x_hat) ** 2).mean())


def psnr(x, x_hat, squared_peak: bool = False) -> float | None:
    """``10 log10(max(x) / MSE)`` in dB.

    The peak enters linearly; ``squared_peak=True`` gives the conventional
    ``max(x)**2`` form instead. Perfect reconstruction returns ``inf``;
    a non-positive peak is undefined and returns ``None``.
    """
    x, x_hat = _check_pair(x, x_hat)
    peak = float(x.max())
    if peak <= 0:
        warnings.warn("psnr undefined: maximum of the reference signal is not positive", RuntimeWarning, stacklevel=2)
        return None
    err = mse(x, x_hat)
    if err == 0:
        return math.inf
    numerator = peak**2 if squared_peak else peak
    return 10.0 * math.log10(numerator / err)


def mean_defined(values: Sequence[float | None]) -> float | None:
    """Mean over finite, defined values (``None``/``inf`` excluded)."""
    kept = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(kept)) if kept else None


@dataclass
class FoldMetrics:
    fold: int
    accuracy: float
    sensitivity: float | None
    fpr_per_hour: float | None
    pcc: float | None
    psnr: float | None
    tp: int
    tn: int
    fp: int
    fn: int
    interictal_hours: float


_SUMMARY = ("accuracy", "sensitivity", "fpr_per_hour", "pcc", "psnr")


@dataclass
class EvalReport:
    folds: list[FoldMetrics] = field(default_factory=list)

    def summary(self) -> dict[str, tuple[float | None, float | None]]:
        """``{metric: (mean, std)}`` over folds where the metric is defined."""
        out = {}
        for name in _SUMMARY:
            vals = [getattr(f, name) for f in self.folds]
            vals = [v for v in vals if v is not None and math.isfinite(v)]
            out[name] = (float(np.mean(vals)), float(np.std(vals))) if vals else (None, None)
        return out

    def rows(self) -> list[dict]:
        rows = [{k: v for k, v in asdict(f).items()} for f in self.folds]
        summary = self.summary()
        for stat, idx in (("mean", 0), ("std", 1)):
            row = {f.name: "" for f in fields(FoldMetrics)}
            row["fold"] = stat
            for name in _SUMMARY:
                row[name] = summary[name][idx]
            if stat == "mean":
                for name in ("tp", "tn", "fp", "fn"):
                    row[name] = sum(getattr(f, name) for f in self.folds)
                row["interictal_hours"] = sum(f.interictal_hours for f in self.folds)
            rows.append(row)
        return rows

    def to_csv(self, path: str | PathLike) -> None:
        names = [f.name for f in fields(FoldMetrics)]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: _fmt(row[k]) for k in names})


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)
