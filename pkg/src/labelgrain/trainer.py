"""Small feed-forward classifier trained with momentum SGD.

Hidden layers use ReLU, the output layer is linear followed by softmax.
Optional dropout acts on the penultimate activation (the input itself when
there is no hidden layer); ``extra_layer`` appends one more hidden layer of
the same width right before the output layer.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .data import Dataset
from .hierarchy import LabelHierarchy
from .metrics import coarse_accuracy, fine_accuracy
from .rng import make_rng

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_classes: int
    hidden_sizes: tuple[int, ...] = ()
    extra_layer: bool = False
    dropout_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(w) for w in self.hidden_sizes))
        if self.input_dim < 1 or self.num_classes < 1:
            raise ValueError("input_dim and num_classes must be >= 1")
        if any(w < 1 for w in self.hidden_sizes):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def layer_sizes(self) -> list[int]:
        hidden = list(self.hidden_sizes)
        if self.extra_layer:
            hidden.append(hidden[-1] if hidden else self.input_dim)
        return [self.input_dim] + hidden + [self.num_classes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 100
    batch_size: int = 32
    plateau_patience: int = 10
    lr_decay_factor: float = 0.1
    min_improvement: float = 1e-3
    max_decays: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError("base_lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.plateau_patience < 1:
            raise ValueError("epochs, batch_size and plateau_patience must be >= 1")
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise ValueError("lr_decay_factor must be in (0, 1)")
        if self.min_improvement < 0 or self.max_decays < 0:
            raise ValueError("min_improvement and max_decays must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Model:
    config: ModelConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match config")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} has shapes {w.shape}/{b.shape}, expected {sizes[l]}x{sizes[l + 1]}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Model":
        return Model(self.config, tuple(w.copy() for w in self.weights), tuple(b.copy() for b in self.biases))

    def __eq__(self, other):
        return (
            isinstance(other, Model)
            and self.config == other.config
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def to_dict(self, seed: int | None = None) -> dict:
        return {
            "config": self.config.to_dict(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        cfg = ModelConfig(**d["config"])
        return cls(
            cfg,
            tuple(np.array(w, dtype=np.float64).reshape(a, b) for w, a, b in
                  zip(d["weights"], cfg.layer_sizes[:-1], cfg.layer_sizes[1:])),
            tuple(np.array(b, dtype=np.float64) for b in d["biases"]),
        )


@dataclass
class TrainingCurves:
    epoch: list[int] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc_fine: list[float] = field(default_factory=list)
    test_acc_coarse: list[float] = field(default_factory=list)

    COLUMNS = ("epoch", "lr", "train_loss", "train_acc", "test_acc_fine", "test_acc_coarse")

    def __len__(self):
        return len(self.epoch)

    def to_dict(self) -> dict:
        return {c: list(getattr(self, c)) for c in self.COLUMNS}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingCurves":
        return cls(**{c: list(d[c]) for c in cls.COLUMNS})

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for row in zip(*(getattr(self, c) for c in self.COLUMNS)):
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def init_model(mc: ModelConfig, seed: int) -> Model:
    """Weights ~ N(0, 1/fan_in), biases zero.

    Layers are drawn input-to-output from one stream, so two configs that
    differ only in ``num_classes`` share every hidden-layer weight.
    """
    rng = make_rng(seed, "init")
    sizes = mc.layer_sizes
    weights = tuple(
        rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    )
    biases = tuple(np.zeros(fan_out) for fan_out in sizes[1:])
    return Model(mc, weights, biases)


def _as_batch(m: Model, batch) -> np.ndarray:
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != m.config.input_dim:
        raise ValueError(f"expected rows of width {m.config.input_dim}, got shape {X.shape}")
    return X


def _dropout_width(mc: ModelConfig) -> int:
    return mc.layer_sizes[-2]


def draw_dropout_mask(rate: float, shape, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(m: Model, batch, train_mode: bool = False, rng: np.random.Generator | None = None):
    """Class probabilities and cached activations ``(inputs, hidden, mask)``.

    Dropout is active only when ``train_mode`` is set and the rate is positive.
    """
    X = _as_batch(m, batch)
    mask = None
    if train_mode and m.config.dropout_rate > 0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        mask = draw_dropout_mask(m.config.dropout_rate, (X.shape[0], _dropout_width(m.config)), rng)
    probs, inputs, hidden = _kernels.forward_numpy(m.weights, m.biases, X, mask)
    return probs, (inputs, hidden, mask)


def loss_and_gradients(m: Model, batch, labels, mask: np.ndarray | None = None):
    """Mean cross-entropy (without weight decay) and per-layer gradients.

    Returns ``(loss, (weight_grads, bias_grads))``.
    """
    X = _as_batch(m, batch)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError("one label per row required")
    if y.min() < 0 or y.max() >= m.config.num_classes:
        raise ValueError(f"labels must be in [0, {m.config.num_classes})")
    loss, gw, gb = _kernels.forward_backward_numpy(m.weights, m.biases, X, y, mask)
    return loss, (gw, gb)


def predict(m: Model, features) -> np.ndarray:
    """Argmax class ids; ties go to the lowest id."""
    probs, _ = forward(m, features)
    return np.argmax(probs, axis=1)


def extract_features(m: Model, features) -> np.ndarray:
    """Eval-mode activations of the last hidden layer."""
    if len(m.weights) < 2:
        raise ValueError("model has no hidden layer to extract features from")
    _, (_, hidden, _) = forward(m, features)
    return hidden[-1]


def train(
    m: Model,
    train_ds: Dataset,
    eval_ds: Dataset,
    h: LabelHierarchy,
    tc: TrainConfig,
) -> tuple[Model, TrainingCurves]:
    """Train a copy of ``m`` on the fine labels of ``train_ds``.

    The model's classes are the fine classes of ``h``. Curves record, per
    epoch, the lr used, mean training loss, coarse-evaluated training accuracy
    and fine / coarse-evaluated accuracy on ``eval_ds``.

    The lr is multiplied by ``lr_decay_factor`` once the best epoch loss has
    not improved by a relative ``min_improvement`` for ``plateau_patience``
    consecutive epochs, at most ``max_decays`` times.
    """
    mc = m.config
    if mc.num_classes != h.n_fine:
        raise ValueError(f"model has {mc.num_classes} outputs, hierarchy has {h.n_fine} fine classes")
    for ds in (train_ds, eval_ds):
        ds.check(h)
        if ds.d != mc.input_dim:
            raise ValueError(f"dataset width {ds.d} != model input_dim {mc.input_dim}")

    model = m.copy()
    weights, biases = list(model.weights), list(model.biases)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    X = np.ascontiguousarray(train_ds.features)
    y = np.ascontiguousarray(train_ds.fine_labels)
    order_rng = make_rng(tc.seed, "order")
    dropout_rng = make_rng(tc.seed, "dropout")
    width = _dropout_width(mc)
    no_mask = np.zeros((0, 0))

    curves = TrainingCurves()
    lr = tc.base_lr
    best = math.inf
    stale = 0
    decays = 0
    for epoch in range(1, tc.epochs + 1):
        order = order_rng.permutation(train_ds.n)
        if mc.dropout_rate > 0:
            mask = draw_dropout_mask(mc.dropout_rate, (train_ds.n, width), dropout_rng)
        else:
            mask = no_mask
        loss, failed = _kernels.sgd_epoch(
            weights, biases, vel_w, vel_b, X, y, order, tc.batch_size, lr, tc.momentum, tc.weight_decay, mask
        )
        if failed >= 0 or not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {max(failed, 0)} (lr={lr:g})")

        train_pred = np.argmax(_kernels.forward_numpy(weights, biases, X)[0], axis=1)
        test_pred = np.argmax(_kernels.forward_numpy(weights, biases, eval_ds.features)[0], axis=1)
        curves.epoch.append(epoch)
        curves.lr.append(lr)
        curves.train_loss.append(loss)
        curves.train_acc.append(coarse_accuracy(y, train_pred, h))
        curves.test_acc_fine.append(fine_accuracy(eval_ds.fine_labels, test_pred))
        curves.test_acc_coarse.append(coarse_accuracy(eval_ds.fine_labels, test_pred, h))

        if loss < best * (1.0 - tc.min_improvement):
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= tc.plateau_patience and decays < tc.max_decays:
                lr *= tc.lr_decay_factor
                decays += 1
                stale = 0
                log.debug("epoch %d: lr decayed to %g", epoch, lr)

    return Model(mc, tuple(weights), tuple(biases)), curves


def save_checkpoint(m: Model, seed: int | None = None) -> str:
    return json.dumps(m.to_dict(seed), sort_keys=True)


def load_checkpoint(text: str) -> Model:
    return Model.from_dict(json.loads(text))
