"""Fine-vs-coarse training comparisons and the sweeps built from them.

Seed policy: a pair run with master seed ``s`` initialises both arms from
``derive_seed(s, "pair", "init")`` and shuffles / drops out from
``derive_seed(s, "pair", "train")``. The arms therefore see the same batch
order and share all hidden-layer initial weights; they differ only in labels
and output width. Every entry of a sweep reuses the same pair seed, so entries
differ only in the swept quantity. Data operations draw from their own
sub-seeds (``"sweep", "fraction"`` and ``"sweep", "noise"``).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats

from ._io import atomic_write_json, atomic_write_text
from .data import Dataset, NoiseConfig, inject_label_noise, stratified_subsample
from .hierarchy import LabelHierarchy, PartitionAssignment, identity_hierarchy, repartition, restrict_coarse
from .metrics import (
    AcrReport,
    ConfusionMatrix,
    DegenerateConfusion,
    StructureError,
    acr,
    build_confusion,
    coarse_accuracy,
    delta_a,
)
from .rng import derive_seed
from .trainer import Model, ModelConfig, TrainConfig, TrainingCurves, init_model, predict, train

SWEEP_KINDS = ("fraction", "noise", "partition", "coarse_count")
ACR_SOURCE = "fine-trained model, test-set fine-grain confusion"


@dataclass
class ArmResult:
    model: Model
    curves: TrainingCurves
    train_acc: float
    test_acc: float
    test_pred: np.ndarray


@dataclass(eq=False)
class PairResult:
    a_cc_train: float
    a_cc_test: float
    a_fc_train: float
    a_fc_test: float
    delta_a_test: float
    acr_report: AcrReport | None
    acr_reason: str | None
    confusion: ConfusionMatrix
    curves_coarse: TrainingCurves
    curves_fine: TrainingCurves
    provenance: dict
    coarse_model: Model | None = field(default=None, repr=False)
    fine_model: Model | None = field(default=None, repr=False)

    @property
    def acr(self) -> float | None:
        return None if self.acr_report is None else self.acr_report.acr

    def to_dict(self) -> dict:
        return {
            "type": "PairResult",
            "a_cc_train": self.a_cc_train,
            "a_cc_test": self.a_cc_test,
            "a_fc_train": self.a_fc_train,
            "a_fc_test": self.a_fc_test,
            "delta_a_test": self.delta_a_test,
            "acr": self.acr_report.to_dict() if self.acr_report else "undefined",
            "acr_reason": self.acr_reason,
            "confusion": self.confusion.counts.tolist(),
            "curves_coarse": self.curves_coarse.to_dict(),
            "curves_fine": self.curves_fine.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairResult":
        report = d["acr"]
        return cls(
            a_cc_train=d["a_cc_train"],
            a_cc_test=d["a_cc_test"],
            a_fc_train=d["a_fc_train"],
            a_fc_test=d["a_fc_test"],
            delta_a_test=d["delta_a_test"],
            acr_report=None if report == "undefined" else AcrReport.from_dict(report),
            acr_reason=d.get("acr_reason"),
            confusion=ConfusionMatrix(np.array(d["confusion"], dtype=np.int64)),
            curves_coarse=TrainingCurves.from_dict(d["curves_coarse"]),
            curves_fine=TrainingCurves.from_dict(d["curves_fine"]),
            provenance=d["provenance"],
        )

    def same_numbers(self, other: "PairResult") -> bool:
        """Equality of every serialized field."""
        return self.to_dict() == other.to_dict()


@dataclass
class SweepResult:
    kind: str
    entries: list[tuple[Any, PairResult]]
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}")

    @property
    def values(self) -> list:
        return [v for v, _ in self.entries]

    @property
    def results(self) -> list[PairResult]:
        return [r for _, r in self.entries]

    def plot_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.kind == "fraction":
            writer.writerow(["fraction", "a_cc_train", "a_cc_test", "a_fc_train", "a_fc_test"])
            for v, r in self.entries:
                writer.writerow([v, r.a_cc_train, r.a_cc_test, r.a_fc_train, r.a_fc_test])
        else:
            writer.writerow(["label", "acr", "delta_a_test"])
            for v, r in self.entries:
                writer.writerow([v, "" if r.acr is None else r.acr, r.delta_a_test])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> Path:
        """Write one JSON per entry, an index and the plot-data CSV."""
        out = Path(out_dir)
        files = []
        for i, (v, r) in enumerate(self.entries):
            name = f"entry_{i:03d}.json"
            atomic_write_json(out / name, r.to_dict())
            files.append({"value": v, "file": name})
        atomic_write_json(out / "index.json", {"type": "SweepResult", "kind": self.kind, "seed": self.seed, "entries": files})
        atomic_write_text(out / f"{self.kind}_plot.csv", self.plot_csv())
        return out / "index.json"


# --- pair runs --------------------------------------------------------------------

def _pair_seeds(seed: int) -> dict:
    return {
        "master": int(seed),
        "init": derive_seed(seed, "pair", "init"),
        "train": derive_seed(seed, "pair", "train"),
    }


def _train_arm(train_ds, test_ds, h, model_cfg, train_cfg, seeds) -> ArmResult:
    mc = replace(model_cfg, input_dim=train_ds.d, num_classes=h.n_fine)
    tc = replace(train_cfg, seed=seeds["train"])
    model, curves = train(init_model(mc, seeds["init"]), train_ds, test_ds, h, tc)
    test_pred = predict(model, test_ds.features)
    train_pred = predict(model, train_ds.features)
    return ArmResult(
        model,
        curves,
        coarse_accuracy(train_ds.fine_labels, train_pred, h),
        coarse_accuracy(test_ds.fine_labels, test_pred, h),
        test_pred,
    )


def _coarse_view(ds: Dataset, h: LabelHierarchy) -> tuple[Dataset, LabelHierarchy]:
    hc = identity_hierarchy(h.coarse_names, name=f"{h.name}#coarse")
    return ds.relabel(ds.coarse_labels(h), hierarchy_ref=hc.name), hc


def train_coarse_arm(train_ds, test_ds, h, model_cfg, train_cfg, seed) -> ArmResult:
    seeds = _pair_seeds(seed)
    ctrain, hc = _coarse_view(train_ds, h)
    ctest, _ = _coarse_view(test_ds, h)
    return _train_arm(ctrain, ctest, hc, model_cfg, train_cfg, seeds)


def train_fine_arm(train_ds, test_ds, h, model_cfg, train_cfg, seed) -> ArmResult:
    return _train_arm(train_ds, test_ds, h, model_cfg, train_cfg, _pair_seeds(seed))


def _ds_summary(ds: Dataset) -> dict:
    return ds.manifest()


def assemble_pair(coarse: ArmResult, fine: ArmResult, test_ds, h, model_cfg, train_cfg, seed, **extra) -> PairResult:
    confusion = build_confusion(test_ds.fine_labels, fine.test_pred, h.n_fine)
    try:
        report, reason = acr(confusion, h), None
    except DegenerateConfusion as exc:
        report, reason = None, exc.reason
    except StructureError as exc:
        report, reason = None, str(exc)
    seeds = _pair_seeds(seed)
    provenance = {
        "hierarchy": h.name,
        "hierarchy_document": h.to_document(),
        "test_dataset": _ds_summary(test_ds),
        "model_config": replace(model_cfg, input_dim=test_ds.d, num_classes=h.n_fine).to_dict(),
        "train_config_coarse": replace(train_cfg, seed=seeds["train"]).to_dict(),
        "train_config_fine": replace(train_cfg, seed=seeds["train"]).to_dict(),
        "seeds": seeds,
        "acr_source": ACR_SOURCE,
        **extra,
    }
    return PairResult(
        a_cc_train=coarse.train_acc,
        a_cc_test=coarse.test_acc,
        a_fc_train=fine.train_acc,
        a_fc_test=fine.test_acc,
        delta_a_test=delta_a(fine.test_acc, coarse.test_acc),
        acr_report=report,
        acr_reason=reason,
        confusion=confusion,
        curves_coarse=coarse.curves,
        curves_fine=fine.curves,
        provenance=provenance,
        coarse_model=coarse.model,
        fine_model=fine.model,
    )


def run_granularity_pair(
    train_ds: Dataset,
    test_ds: Dataset,
    h: LabelHierarchy,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int,
    **provenance,
) -> PairResult:
    """Train on coarse labels and on fine labels, evaluate both on coarse labels.

    ``model_cfg.input_dim`` / ``num_classes`` are overridden per arm.
    """
    coarse = train_coarse_arm(train_ds, test_ds, h, model_cfg, train_cfg, seed)
    fine = train_fine_arm(train_ds, test_ds, h, model_cfg, train_cfg, seed)
    return assemble_pair(
        coarse, fine, test_ds, h, model_cfg, train_cfg, seed,
        train_dataset=_ds_summary(train_ds), **provenance,
    )


# --- sweeps ---------------------------------------------------------------------------

def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


def _check_ascending(values, lo, hi, lo_open):
    for v in values:
        if not (lo < v <= hi if lo_open else lo <= v <= hi):
            raise ValueError(f"value {v} out of range")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"values must be strictly ascending: {list(values)}")


def scaled_epochs(base_epochs: int, fraction: float) -> int:
    """``ceil(base / fraction)``, exact for decimal fractions (0.2 -> 5x)."""
    return math.ceil(Fraction(base_epochs) / Fraction(repr(float(fraction))))


def _fraction_entry(train_ds, test_ds, h, fraction, model_cfg, train_cfg, seed):
    sub = stratified_subsample(train_ds, fraction, derive_seed(seed, "sweep", "fraction"))
    tc = replace(train_cfg, epochs=scaled_epochs(train_cfg.epochs, fraction))
    return run_granularity_pair(sub, test_ds, h, model_cfg, tc, seed, sweep={"kind": "fraction", "value": fraction})


def sweep_data_fraction(train_ds, test_ds, h, fractions: Sequence[float], model_cfg, train_cfg, seed, jobs=1) -> SweepResult:
    fractions = [float(f) for f in fractions]
    _check_ascending(fractions, 0.0, 1.0, lo_open=True)
    items = [(train_ds, test_ds, h, f, model_cfg, train_cfg, seed) for f in fractions]
    return SweepResult("fraction", list(zip(fractions, _map(_fraction_entry, items, jobs))), seed)


def _noise_entry(train_ds, test_ds, h, factor, model_cfg, train_cfg, seed, coarse):
    noisy = inject_label_noise(train_ds, h, NoiseConfig(factor, derive_seed(seed, "sweep", "noise")))
    fine = train_fine_arm(noisy, test_ds, h, model_cfg, train_cfg, seed)
    return assemble_pair(
        coarse, fine, test_ds, h, model_cfg, train_cfg, seed,
        train_dataset=_ds_summary(noisy), sweep={"kind": "noise", "value": factor},
    )


def sweep_noise(train_ds, test_ds, h, factors: Sequence[float], model_cfg, train_cfg, seed, jobs=1) -> SweepResult:
    """Noisy fine labels on the training set only; test labels stay clean.

    The coarse arm is trained once, since label noise never changes a coarse label.
    """
    factors = [float(f) for f in factors]
    _check_ascending(factors, 0.0, 1.0, lo_open=False)
    coarse = train_coarse_arm(train_ds, test_ds, h, model_cfg, train_cfg, seed)
    items = [(train_ds, test_ds, h, f, model_cfg, train_cfg, seed, coarse) for f in factors]
    return SweepResult("noise", list(zip(factors, _map(_noise_entry, items, jobs))), seed)


def _partition_entry(train_ds, test_ds, base_h, assignment, model_cfg, train_cfg, seed):
    h = repartition(base_h, assignment)
    return run_granularity_pair(
        train_ds, test_ds, h, model_cfg, train_cfg, seed,
        sweep={"kind": "partition", "value": list(assignment.assignment)},
    )


def sweep_partitions(
    train_ds, test_ds, base_h, assignments: Sequence[PartitionAssignment], model_cfg, train_cfg, seed,
    labels: Sequence[str] | None = None, jobs=1,
) -> SweepResult:
    assignments = [a if isinstance(a, PartitionAssignment) else PartitionAssignment(tuple(a)) for a in assignments]
    if labels is None:
        labels = [f"({i + 1})" for i in range(len(assignments))]
    items = [(train_ds, test_ds, base_h, a, model_cfg, train_cfg, seed) for a in assignments]
    return SweepResult("partition", list(zip(labels, _map(_partition_entry, items, jobs))), seed)


def filter_to_hierarchy(ds: Dataset, remap: dict[int, int], h: LabelHierarchy) -> Dataset:
    """Keep examples whose fine class survives ``remap`` and relabel them."""
    lut = np.full(int(ds.fine_labels.max()) + 1, -1, dtype=np.int64)
    for old, new in remap.items():
        if old < lut.size:
            lut[old] = new
    new = lut[ds.fine_labels]
    keep = np.flatnonzero(new >= 0)
    if keep.size == 0:
        raise ValueError("no examples survive the restriction")
    return Dataset(ds.features[keep], new[keep], h.name, dict(ds.meta))


def _coarse_count_entry(train_ds, test_ds, h, subset, model_cfg, train_cfg, seed):
    hr, remap = restrict_coarse(h, subset)
    return run_granularity_pair(
        filter_to_hierarchy(train_ds, remap, hr), filter_to_hierarchy(test_ds, remap, hr), hr,
        model_cfg, train_cfg, seed,
        sweep={"kind": "coarse_count", "value": sorted(int(s) for s in subset)},
    )


def sweep_coarse_count(train_ds, test_ds, h, subsets: Sequence[Sequence[int]], model_cfg, train_cfg, seed, jobs=1) -> SweepResult:
    subsets = [sorted({int(s) for s in sub}) for sub in subsets]
    if any(not s for s in subsets):
        raise ValueError("coarse subsets must be non-empty")
    items = [(train_ds, test_ds, h, s, model_cfg, train_cfg, seed) for s in subsets]
    return SweepResult("coarse_count", list(zip([len(s) for s in subsets], _map(_coarse_count_entry, items, jobs))), seed)


# --- capacity controls -------------------------------------------------------------------

@dataclass
class ControlEntry:
    label: str
    train_label: str
    extra_layer: bool
    dropout: float
    n_params: int
    train_acc: float
    test_acc: float
    delta_train: float
    delta_test: float


@dataclass
class ControlReport:
    entries: list[ControlEntry]

    def __getitem__(self, label: str) -> ControlEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"type": "ControlReport", "baseline": "coarse baseline", "entries": [vars(e) for e in self.entries]}


CONTROL_RUNS = (
    ("coarse baseline", "C", False, False),
    ("coarse extra layer", "C", True, False),
    ("coarse dropout", "C", False, True),
    ("coarse extra layer + dropout", "C", True, True),
    ("fine baseline", "F", False, False),
    ("fine dropout", "F", False, True),
)


def run_capacity_controls(train_ds, test_ds, h, model_cfg: ModelConfig, train_cfg, seed, dropout_rate=0.3) -> ControlReport:
    """Coarse runs with an extra layer and/or dropout against fine-label runs.

    Deltas are relative to the coarse-label baseline.
    """
    runs = []
    for label, which, extra, drop in CONTROL_RUNS:
        mc = replace(model_cfg, extra_layer=extra, dropout_rate=dropout_rate if drop else 0.0)
        arm = (train_coarse_arm if which == "C" else train_fine_arm)(train_ds, test_ds, h, mc, train_cfg, seed)
        runs.append((label, which, extra, mc.dropout_rate, arm))
    base = runs[0][4]
    return ControlReport([
        ControlEntry(
            label, which, extra, rate, arm.model.n_params, arm.train_acc, arm.test_acc,
            arm.train_acc - base.train_acc, arm.test_acc - base.test_acc,
        )
        for label, which, extra, rate, arm in runs
    ])


# --- correlation ---------------------------------------------------------------------------

def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(x) != len(y):
        raise ValueError("length mismatch")
    if len(x) < 3:
        raise ValueError(f"need at least 3 points, got {len(x)}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined for constant input")
    return float(stats.spearmanr(x, y).statistic)


def correlate_acr_delta(results: Sequence[PairResult]) -> float:
    """Rank correlation of ACR against delta_a_test; undefined-ACR results are skipped."""
    pts = [(r.acr, r.delta_a_test) for r in results if r.acr is not None]
    return spearman([p[0] for p in pts], [p[1] for p in pts])
