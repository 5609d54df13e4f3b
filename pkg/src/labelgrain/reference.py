"""Shipped synthetic reference setups used by the acceptance suite and demos."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

from .data import Dataset, SyntheticSpec, generate_synthetic, train_test_split
from .hierarchy import LabelHierarchy, grid_hierarchy
from .rng import derive_seed
from .trainer import ModelConfig, TrainConfig


@dataclass(frozen=True)
class ReferenceSetup:
    name: str
    hierarchy: LabelHierarchy
    synthetic: dict
    test_fraction: float
    model: ModelConfig
    train: TrainConfig

    def spec(self, seed: int, **overrides) -> SyntheticSpec:
        return SyntheticSpec(self.hierarchy, seed=seed, **{**self.synthetic, **overrides})

    def datasets(self, seed: int, **overrides) -> tuple[Dataset, Dataset]:
        """Train/test datasets drawn from one geometry for data seed ``seed``."""
        ds = generate_synthetic(self.spec(seed, **overrides))
        return train_test_split(ds, self.test_fraction, derive_seed(seed, "reference", "split"))


def reference_names() -> list[str]:
    return sorted(_load())


def _load() -> dict:
    text = resources.files("labelgrain.fixtures").joinpath("reference.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_reference(name: str = "reference-2x5") -> ReferenceSetup:
    configs = _load()
    if name not in configs:
        raise KeyError(f"unknown reference setup {name!r}; choose from {sorted(configs)}")
    cfg = configs[name]
    h = grid_hierarchy(cfg["hierarchy"]["n_coarse"], cfg["hierarchy"]["fine_per_coarse"], name=name)
    dim = cfg["synthetic"]["dim"]
    model = ModelConfig(dim, h.n_fine, **cfg["model"])
    return ReferenceSetup(name, h, dict(cfg["synthetic"]), float(cfg["test_fraction"]), model, TrainConfig(**cfg["train"]))


def with_epochs(setup: ReferenceSetup, epochs: int) -> ReferenceSetup:
    return replace(setup, train=replace(setup.train, epochs=epochs))
