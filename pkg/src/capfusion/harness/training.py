"""Mini-batch Adam training with early stopping on validation macro F1."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn import AdamState, adam_step, softmax_cross_entropy
from ..nn.gradcheck import iter_layers
from ..nn.layers import Dropout
from .metrics import confusion_matrix, macro_f1, accuracy


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class Hyper:
    learning_rate: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    min_delta: float = 1e-6

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValueError(f"unknown hyperparameters {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)  # one dict per epoch
    best_epoch: int = 0
    best_val_f1: float = float("-inf")


def _val_scores(model, ds) -> tuple[float, float]:
    pred = np.argmax(model.predict_logits(ds.X), axis=1)
    cm = confusion_matrix(ds.y, pred, model.spec.num_labels)
    return accuracy(cm), macro_f1(cm, warn=False)


def train(model, train_ds, val_ds, hyper: Hyper | None = None) -> TrainResult:
    """Train in place; the model ends up holding its best-validation checkpoint."""
    hyper = hyper or Hyper()
    K = model.spec.num_labels
    for name, ds in (("train", train_ds), ("validation", val_ds)):
        if len(ds) == 0:
            raise ValueError(f"{name} set is empty")
        if ds.y.min() < 0 or ds.y.max() >= K:
            raise ValueError(f"{name} labels outside [0, {K})")

    for k, layer in enumerate(l for l in iter_layers(model) if isinstance(l, Dropout)):
        layer.rng = np.random.default_rng([hyper.seed, k])
    rng = np.random.default_rng(hyper.seed)
    opt = AdamState(learning_rate=hyper.learning_rate)
    params = model.parameters()
    result = TrainResult(model)
    best_state = model.state_dict()
    stale = 0
    X, y = train_ds.X, train_ds.y
    for epoch in range(1, hyper.max_epochs + 1):
        order = rng.permutation(len(y))
        total, seen = 0.0, 0
        for b, lo in enumerate(range(0, len(y), hyper.batch_size)):
            idx = order[lo:lo + hyper.batch_size]
            model.zero_grad()
            logits = model.forward(X[idx], train=True)
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            model.backward(dlogits)
            adam_step(params, model.gradients(), opt)
            total += loss * len(idx)
            seen += len(idx)
        val_acc, val_f1 = _val_scores(model, val_ds)
        result.history.append({"epoch": epoch, "train_loss": total / seen,
                               "val_accuracy": val_acc, "val_macro_f1": val_f1})
        if val_f1 > result.best_val_f1 + hyper.min_delta:
            result.best_val_f1, result.best_epoch = val_f1, epoch
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    model.load_state_dict(best_state)
    return result
