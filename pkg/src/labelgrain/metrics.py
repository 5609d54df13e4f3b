"""Confusion matrices, coarse-evaluated accuracy and the average confusion ratio."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .hierarchy import LabelHierarchy


class MetricError(ValueError):
    pass


class DegenerateConfusion(MetricError):
    """No off-diagonal confusion inside any coarse class, so the ratio is undefined."""

    reason = "zero intra-class confusion"


class StructureError(MetricError):
    """The hierarchy has no intra-coarse or no inter-coarse class pairs."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts over fine classes: rows are true classes, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise MetricError(f"confusion matrix must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise MetricError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def to_csv(self, names: Sequence[str] | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if names is not None:
            writer.writerow(names)
        writer.writerows(self.counts.tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, header: bool = False) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if header:
            rows = rows[1:]
        return cls(np.array([[int(v) for v in row] for row in rows if row], dtype=np.int64))


@dataclass(frozen=True)
class AcrReport:
    acr: float
    inter_avg: float
    intra_avg: float
    n_inter_pairs: int
    n_intra_pairs: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "AcrReport":
        return cls(
            float(d["acr"]),
            float(d["inter_avg"]),
            float(d["intra_avg"]),
            int(d["n_inter_pairs"]),
            int(d["n_intra_pairs"]),
        )


def _labels(seq, k: int | None, what: str) -> np.ndarray:
    arr = np.asarray(seq)
    if arr.ndim != 1:
        raise MetricError(f"{what} labels must be one-dimensional")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise MetricError(f"{what} labels must be integer ids")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and (arr.min() < 0 or (k is not None and arr.max() >= k)):
        bad = arr[(arr < 0) | (arr >= (k if k is not None else np.inf))][0]
        raise MetricError(f"{what} label {int(bad)} out of range for {k} classes")
    return arr


def _pair(true_fine, pred_fine, k):
    t = _labels(true_fine, k, "true")
    p = _labels(pred_fine, k, "predicted")
    if t.shape != p.shape:
        raise MetricError(f"length mismatch: {t.shape[0]} true vs {p.shape[0]} predicted")
    return t, p


def build_confusion(true_fine, pred_fine, k: int) -> ConfusionMatrix:
    t, p = _pair(true_fine, pred_fine, k)
    return ConfusionMatrix(_kernels.tally_confusion(t, p, int(k)))


def acr(c: ConfusionMatrix, h: LabelHierarchy) -> AcrReport:
    """Average inter-coarse confusion over average intra-coarse confusion.

    Pairs are ordered ``(i, j)`` with ``i != j``; diagonal entries are correct
    predictions and never count as confusion.
    """
    if c.k != h.n_fine:
        raise MetricError(f"confusion matrix has {c.k} classes, hierarchy has {h.n_fine} fine classes")
    groups = h.mapping
    sizes = np.bincount(groups, minlength=h.n_coarse)
    n_intra = int((sizes * (sizes - 1)).sum())
    n_inter = c.k * (c.k - 1) - n_intra
    if n_intra == 0:
        raise StructureError("no coarse class has two or more fine classes")
    if n_inter == 0:
        raise StructureError("hierarchy has a single coarse class")
    intra_sum, inter_sum = _kernels.pair_sums(c.counts, groups)
    intra_avg = intra_sum / n_intra
    inter_avg = inter_sum / n_inter
    if intra_sum == 0:
        raise DegenerateConfusion("zero intra-class confusion: ratio undefined")
    return AcrReport(inter_avg / intra_avg, inter_avg, intra_avg, n_inter, n_intra)


def coarse_accuracy(true_fine, pred_fine, h: LabelHierarchy) -> float:
    t, p = _pair(true_fine, pred_fine, h.n_fine)
    if t.size == 0:
        raise MetricError("no examples")
    m = h.mapping
    return int((m[t] == m[p]).sum()) / t.size


def fine_accuracy(true_fine, pred_fine) -> float:
    t, p = _pair(true_fine, pred_fine, None)
    if t.size == 0:
        raise MetricError("no examples")
    return int((t == p).sum()) / t.size


def delta_a(a_fc: float, a_cc: float) -> float:
    """Benefit of fine-label training: ``a_fc - a_cc``."""
    for v in (a_fc, a_cc):
        if not 0.0 <= v <= 1.0:
            raise MetricError(f"accuracy {v} outside [0, 1]")
    return a_fc - a_cc
