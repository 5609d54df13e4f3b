"""Two-level label taxonomies: fine classes grouped into coarse classes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BUILTIN_HIERARCHIES = (
    "cifar10",
    "cifar100",
    "cifar100-animals",
    "imagenet-dogcat",
    "imagenet-fruitvege",
)


class HierarchyError(ValueError):
    """Raised for malformed hierarchy documents or invalid assignments."""


@dataclass(frozen=True)
class LabelHierarchy:
    """Fine-to-coarse label mapping with dense 0-based ids.

    Ids follow document order; names are display metadata only.
    """

    fine_names: tuple[str, ...]
    coarse_names: tuple[str, ...]
    fine_to_coarse: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fine_names", tuple(self.fine_names))
        object.__setattr__(self, "coarse_names", tuple(self.coarse_names))
        object.__setattr__(self, "fine_to_coarse", tuple(int(c) for c in self.fine_to_coarse))
        _check_names(self.fine_names, "fine")
        _check_names(self.coarse_names, "coarse")
        if len(self.fine_to_coarse) != len(self.fine_names):
            raise HierarchyError(
                f"mapping has {len(self.fine_to_coarse)} entries for {len(self.fine_names)} fine classes"
            )
        n_coarse = len(self.coarse_names)
        for fine, coarse in zip(self.fine_names, self.fine_to_coarse):
            if not 0 <= coarse < n_coarse:
                raise HierarchyError(f"fine class {fine!r} maps to invalid coarse id {coarse}")
        used = set(self.fine_to_coarse)
        for cid, cname in enumerate(self.coarse_names):
            if cid not in used:
                raise HierarchyError(f"coarse class {cname!r} has no fine classes")

    @property
    def n_fine(self) -> int:
        return len(self.fine_names)

    @property
    def n_coarse(self) -> int:
        return len(self.coarse_names)

    @property
    def mapping(self) -> np.ndarray:
        """Fine-to-coarse lookup as an int64 array (a fresh copy)."""
        return np.asarray(self.fine_to_coarse, dtype=np.int64)

    def fine_id(self, name: str) -> int:
        try:
            return self._fine_index[name]
        except KeyError:
            raise KeyError(f"unknown fine label {name!r}") from None

    def coarse_id(self, name: str) -> int:
        try:
            return self.coarse_names.index(name)
        except ValueError:
            raise KeyError(f"unknown coarse label {name!r}") from None

    def members(self, coarse: int) -> list[int]:
        """Fine ids belonging to ``coarse``, ascending."""
        return [i for i, c in enumerate(self.fine_to_coarse) if c == coarse]

    @property
    def _fine_index(self) -> dict[str, int]:
        index = self.__dict__.get("_fine_index_cache")
        if index is None:
            index = {n: i for i, n in enumerate(self.fine_names)}
            object.__setattr__(self, "_fine_index_cache", index)
        return index

    def to_document(self) -> dict:
        return {
            "coarse": list(self.coarse_names),
            "fine": [
                {"name": f, "coarse": self.coarse_names[c]}
                for f, c in zip(self.fine_names, self.fine_to_coarse)
            ],
        }


@dataclass(frozen=True)
class PartitionAssignment:
    """Coarse id per fine id, e.g. one row of a custom-partition table."""

    assignment: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        values = tuple(int(a) for a in self.assignment)
        object.__setattr__(self, "assignment", values)
        if not values:
            raise HierarchyError("empty assignment")
        if min(values) < 0:
            raise HierarchyError("coarse ids must be non-negative")
        missing = set(range(max(values) + 1)) - set(values)
        if missing:
            raise HierarchyError(f"coarse ids {sorted(missing)} have no fine classes")

    @property
    def n_coarse(self) -> int:
        return max(self.assignment) + 1

    def __len__(self):
        return len(self.assignment)

    @classmethod
    def parse(cls, line: str) -> "PartitionAssignment":
        try:
            return cls(tuple(int(tok) for tok in line.split(",")))
        except ValueError as exc:
            raise HierarchyError(f"bad assignment line {line!r}: {exc}") from None


def _check_names(names: Sequence[str], kind: str) -> None:
    if not names:
        raise HierarchyError(f"no {kind} classes")
    seen = set()
    for name in names:
        if not isinstance(name, str) or not name:
            raise HierarchyError(f"{kind} class names must be non-empty strings, got {name!r}")
        if name in seen:
            raise HierarchyError(f"duplicate {kind} class name {name!r}")
        seen.add(name)


def load_hierarchy(document: str | bytes | dict, name: str = "") -> LabelHierarchy:
    """Build a hierarchy from a JSON document (text or already-parsed dict)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise HierarchyError(f"malformed hierarchy document: {exc}") from None
    if not isinstance(document, dict):
        raise HierarchyError("hierarchy document must be a JSON object")
    coarse = document.get("coarse")
    fine = document.get("fine")
    if not isinstance(coarse, list) or not isinstance(fine, list):
        raise HierarchyError("hierarchy document needs 'coarse' and 'fine' lists")
    _check_names(coarse, "coarse")
    coarse_index = {c: i for i, c in enumerate(coarse)}
    fine_names, mapping = [], []
    for entry in fine:
        if not isinstance(entry, dict) or "name" not in entry or "coarse" not in entry:
            raise HierarchyError(f"fine entry must have 'name' and 'coarse': {entry!r}")
        if entry["coarse"] not in coarse_index:
            raise HierarchyError(
                f"fine class {entry['name']!r} references unknown coarse class {entry['coarse']!r}"
            )
        fine_names.append(entry["name"])
        mapping.append(coarse_index[entry["coarse"]])
    return LabelHierarchy(tuple(fine_names), tuple(coarse), tuple(mapping), name=name)


def read_hierarchy(path_or_name: str | Path) -> LabelHierarchy:
    """Load a hierarchy file, or one of the shipped fixtures by name."""
    path = Path(path_or_name)
    if path.is_file():
        return load_hierarchy(path.read_text(encoding="utf-8"), name=path.name)
    if str(path_or_name) in BUILTIN_HIERARCHIES:
        return builtin_hierarchy(str(path_or_name))
    raise FileNotFoundError(f"no hierarchy file or builtin named {str(path_or_name)!r}")


def builtin_hierarchy(name: str) -> LabelHierarchy:
    if name not in BUILTIN_HIERARCHIES:
        raise KeyError(f"unknown builtin hierarchy {name!r}; choose from {BUILTIN_HIERARCHIES}")
    text = resources.files("labelgrain.fixtures").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return load_hierarchy(text, name=f"{name}.json")


def builtin_lines(filename: str) -> list[str]:
    text = resources.files("labelgrain.fixtures").joinpath(filename).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def identity_hierarchy(names: Sequence[str], name: str = "") -> LabelHierarchy:
    """Hierarchy in which every fine class is its own coarse class."""
    return LabelHierarchy(tuple(names), tuple(names), tuple(range(len(names))), name=name)


def grid_hierarchy(n_coarse: int, fine_per_coarse: int, name: str = "") -> LabelHierarchy:
    """Synthetic hierarchy ``c{i}`` -> ``c{i}f{j}`` with equal group sizes."""
    fine = tuple(f"c{c}f{j}" for c in range(n_coarse) for j in range(fine_per_coarse))
    mapping = tuple(c for c in range(n_coarse) for _ in range(fine_per_coarse))
    return LabelHierarchy(fine, tuple(f"c{c}" for c in range(n_coarse)), mapping,
                          name=name or f"grid-{n_coarse}x{fine_per_coarse}")


def _check_fine(h: LabelHierarchy, fine: int) -> int:
    fine = int(fine)
    if not 0 <= fine < h.n_fine:
        raise IndexError(f"fine id {fine} out of range for {h.n_fine} fine classes")
    return fine


def map_fine_to_coarse(h: LabelHierarchy, fine: int) -> int:
    return h.fine_to_coarse[_check_fine(h, fine)]


def same_coarse(h: LabelHierarchy, i: int, j: int) -> bool:
    return h.fine_to_coarse[_check_fine(h, i)] == h.fine_to_coarse[_check_fine(h, j)]


def repartition(
    h: LabelHierarchy, p: PartitionAssignment, coarse_names: Sequence[str] | None = None
) -> LabelHierarchy:
    """Regroup the fine classes of ``h`` into new coarse classes given by ``p``.

    ``coarse_names`` defaults to ``"0", "1", ...``.
    """
    if len(p) != h.n_fine:
        raise HierarchyError(f"assignment has {len(p)} entries, hierarchy has {h.n_fine} fine classes")
    if coarse_names is None:
        coarse_names = [str(i) for i in range(p.n_coarse)]
    if len(coarse_names) != p.n_coarse:
        raise HierarchyError(
            f"{len(coarse_names)} coarse names given for {p.n_coarse} coarse ids in assignment"
        )
    return LabelHierarchy(h.fine_names, tuple(coarse_names), p.assignment, name=h.name)


def restrict_coarse(h: LabelHierarchy, keep: Iterable[int]) -> tuple[LabelHierarchy, dict[int, int]]:
    """Keep only the coarse classes in ``keep`` together with their fine classes.

    Returns the restricted hierarchy and an old-to-new fine id remap covering
    the surviving fine classes. Ids are re-densified in original order.
    """
    keep = {int(k) for k in keep}
    if not keep:
        raise HierarchyError("keep set is empty")
    bad = [k for k in keep if not 0 <= k < h.n_coarse]
    if bad:
        raise HierarchyError(f"coarse ids {sorted(bad)} out of range")
    coarse_remap = {old: new for new, old in enumerate(sorted(keep))}
    fine_remap: dict[int, int] = {}
    fine_names, mapping = [], []
    for old, (fname, c) in enumerate(zip(h.fine_names, h.fine_to_coarse)):
        if c in coarse_remap:
            fine_remap[old] = len(fine_names)
            fine_names.append(fname)
            mapping.append(coarse_remap[c])
    coarse_names = tuple(h.coarse_names[c] for c in sorted(keep))
    return LabelHierarchy(tuple(fine_names), coarse_names, tuple(mapping), name=h.name), fine_remap
