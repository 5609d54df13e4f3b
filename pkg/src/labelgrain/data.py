"""Datasets, synthetic hierarchical data, subsampling, label noise and CSV I/O.

Only fine labels are stored; coarse labels are always derived through a
:class:`~labelgrain.hierarchy.LabelHierarchy`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._io import atomic_write_json, atomic_write_text
from .hierarchy import LabelHierarchy
from .rng import make_rng


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    fine_labels: np.ndarray
    hierarchy_ref: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.fine_labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be an n x d matrix with n, d >= 1, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} feature rows")
        if y.min() < 0:
            raise DataError("fine labels must be non-negative ids")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "fine_labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def coarse_labels(self, h: LabelHierarchy) -> np.ndarray:
        self.check(h)
        return h.mapping[self.fine_labels]

    def check(self, h: LabelHierarchy) -> None:
        if self.fine_labels.max() >= h.n_fine:
            raise DataError(
                f"label {int(self.fine_labels.max())} invalid for hierarchy with {h.n_fine} fine classes"
            )

    def class_counts(self, k: int) -> np.ndarray:
        return np.bincount(self.fine_labels, minlength=k)

    def take(self, index, **meta) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.features[index], self.fine_labels[index], self.hierarchy_ref, {**self.meta, **meta})

    def relabel(self, labels, hierarchy_ref: str | None = None, **meta) -> "Dataset":
        return Dataset(
            self.features,
            labels,
            self.hierarchy_ref if hierarchy_ref is None else hierarchy_ref,
            {**self.meta, **meta},
        )

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.fine_labels, other.fine_labels)
            and self.hierarchy_ref == other.hierarchy_ref
        )

    def manifest(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "hierarchy": self.hierarchy_ref,
            "generator": self.meta.get("generator"),
            "seed": self.meta.get("seed"),
            **{k: v for k, v in self.meta.items() if k not in ("generator", "seed")},
        }


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian blobs arranged as a two-level hierarchy.

    Coarse centers sit on the vertices of a regular simplex with edge length
    ``coarse_separation``; each fine class gets a sub-center at distance
    ``fine_separation`` from its coarse center in a random direction.
    """

    hierarchy: LabelHierarchy
    n_per_fine: int
    dim: int
    coarse_separation: float
    fine_separation: float
    noise_sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.n_per_fine < 1:
            raise DataError("n_per_fine must be >= 1")
        if self.dim < 1:
            raise DataError("dim must be >= 1")
        for name in ("coarse_separation", "fine_separation", "noise_sigma"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DataError(f"{name} must be a positive finite number, got {v}")
        if self.dim < self.hierarchy.n_coarse - 1:
            raise DataError(
                f"dim {self.dim} cannot hold a simplex of {self.hierarchy.n_coarse} coarse centers"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hierarchy"] = self.hierarchy.name
        return d


@dataclass(frozen=True)
class NoiseConfig:
    randomness_factor: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.randomness_factor <= 1.0:
            raise DataError(f"randomness factor must be in [0, 1], got {self.randomness_factor}")


def simplex_vertices(k: int, edge: float) -> np.ndarray:
    """``k`` points in ``k - 1`` dimensions, pairwise distance ``edge``.

    Uses the Helmert basis of the sum-zero subspace, so the layout is a fixed
    closed form with no random rotation.
    """
    if k == 1:
        return np.zeros((1, 0))
    basis = np.zeros((k - 1, k))
    for j in range(1, k):
        basis[j - 1, :j] = 1.0
        basis[j - 1, j] = -j
        basis[j - 1] /= math.sqrt(j * (j + 1))
    return basis.T * (edge / math.sqrt(2.0))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    h = spec.hierarchy
    geometry = make_rng(spec.seed, "synthetic", "geometry")
    sampling = make_rng(spec.seed, "synthetic", "samples")
    centers = np.zeros((h.n_coarse, spec.dim))
    verts = simplex_vertices(h.n_coarse, spec.coarse_separation)
    centers[:, : verts.shape[1]] = verts
    directions = geometry.standard_normal((h.n_fine, spec.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    sub_centers = centers[h.mapping] + spec.fine_separation * directions
    noise = sampling.standard_normal((h.n_fine * spec.n_per_fine, spec.dim))
    labels = np.repeat(np.arange(h.n_fine), spec.n_per_fine)
    X = sub_centers[labels] + spec.noise_sigma * noise
    return Dataset(X, labels, h.name, {"generator": spec.to_dict(), "seed": spec.seed})


def _exact_floor(fraction: float, count: int) -> int:
    # decimal-exact so 0.29 * 100 floors to 29, not 28
    return math.floor(Fraction(repr(float(fraction))) * count)


def _class_index(ds: Dataset):
    order = np.argsort(ds.fine_labels, kind="stable")
    classes, starts = np.unique(ds.fine_labels[order], return_index=True)
    return zip(classes.tolist(), np.split(order, starts[1:]))


def stratified_subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep ``max(1, floor(fraction * n_c))`` examples of every class ``c``.

    Chosen uniformly without replacement; output keeps the input order.
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    rng = make_rng(seed, "subsample")
    keep = []
    for _, idx in _class_index(ds):
        count = max(1, _exact_floor(fraction, idx.size))
        keep.append(rng.choice(idx, size=count, replace=False))
    return ds.take(np.sort(np.concatenate(keep)), subsample={"fraction": fraction, "seed": seed})


def inject_label_noise(ds: Dataset, h: LabelHierarchy, cfg: NoiseConfig) -> Dataset:
    """Resample fine labels within their coarse class with probability ``r``.

    The draw is uniform over all fine classes of the coarse class, the
    original included, so the effective flip rate is ``r * (1 - 1/k_c)``.
    Uniforms are drawn for every example regardless of ``r``; with a fixed
    seed the examples resampled at a lower factor are a subset of those at
    a higher one.
    """
    ds.check(h)
    rng = make_rng(cfg.seed, "label-noise")
    groups = h.mapping
    members = [np.asarray(h.members(c), dtype=np.int64) for c in range(h.n_coarse)]
    sizes = np.array([m.size for m in members])
    coarse = groups[ds.fine_labels]
    u = rng.random(ds.n)
    pick = rng.integers(0, sizes[coarse])
    table = np.full((h.n_coarse, sizes.max()), -1, dtype=np.int64)
    for c, m in enumerate(members):
        table[c, : m.size] = m
    resampled = table[coarse, pick]
    labels = np.where(u < cfg.randomness_factor, resampled, ds.fine_labels)
    meta = {
        "label_noise": {
            "randomness_factor": cfg.randomness_factor,
            "seed": cfg.seed,
            "draw": "uniform within coarse class, original label included",
        }
    }
    return ds.relabel(labels, **meta)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split; each class sends ``round(test_fraction * n_c)`` to test."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = make_rng(seed, "split")
    train, test = [], []
    frac = Fraction(repr(float(test_fraction)))
    for cls, idx in _class_index(ds):
        n_test = math.floor(frac * idx.size + Fraction(1, 2))
        if n_test == 0 or n_test == idx.size:
            raise DataError(
                f"class {cls} has {idx.size} example(s); cannot place it in both splits "
                f"at test fraction {test_fraction}"
            )
        perm = rng.permutation(idx)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    info = {"test_fraction": test_fraction, "seed": seed}
    return (
        ds.take(np.sort(np.concatenate(train)), split={**info, "part": "train"}),
        ds.take(np.sort(np.concatenate(test)), split={**info, "part": "test"}),
    )


# --- files ---------------------------------------------------------------------

def manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def dataset_to_csv(ds: Dataset, h: LabelHierarchy) -> str:
    ds.check(h)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{j}" for j in range(ds.d)] + ["fine_label"])
    names = h.fine_names
    for row, label in zip(ds.features.tolist(), ds.fine_labels.tolist()):
        writer.writerow([repr(v) for v in row] + [names[label]])
    return buf.getvalue()


def save_dataset(ds: Dataset, path: str | Path, h: LabelHierarchy) -> None:
    """Write the CSV and its sidecar manifest."""
    atomic_write_text(path, dataset_to_csv(ds, h))
    atomic_write_json(manifest_path(path), ds.manifest())


def parse_dataset_csv(text: str, h: LabelHierarchy, hierarchy_ref: str = "") -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty dataset file")
    header = rows[0]
    d = len(header) - 1
    if d < 1 or header[-1] != "fine_label" or header[:-1] != [f"f{j}" for j in range(d)]:
        raise DataError(f"bad header {header!r}; expected f0,...,f{{d-1}},fine_label")
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataError(f"line {lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            X.append([float(v) for v in row[:-1]])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric feature in {row[:-1]!r}") from None
        try:
            y.append(h.fine_id(row[-1]))
        except KeyError:
            raise DataError(f"line {lineno}: unknown label {row[-1]!r}") from None
    if not X:
        raise DataError("dataset has no rows")
    return Dataset(np.array(X), np.array(y), hierarchy_ref or h.name)


def load_dataset(path: str | Path, h: LabelHierarchy) -> Dataset:
    path = Path(path)
    ds = parse_dataset_csv(path.read_text(encoding="utf-8"), h)
    mpath = manifest_path(path)
    if mpath.is_file():
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        meta = {k: v for k, v in manifest.items() if k not in ("n", "d", "hierarchy")}
        ds = Dataset(ds.features, ds.fine_labels, manifest.get("hierarchy") or ds.hierarchy_ref, meta)
    return ds
