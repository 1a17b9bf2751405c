"""Non-spiking MLP teacher and the teacher-logit file format.

Teacher-logit files are JSONL, one record per sample in dataset order::

    {"index": 0, "logits": [1.25, -0.5, ...]}
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.io_utils import read_json, read_jsonl, write_json, write_jsonl
from ..utils.seeding import stream
from .autodiff import NonFiniteError, Tape, Tensor, as_tensor, relu
from .data import Dataset
from .losses import TeacherLogits, cross_entropy
from .snn import CheckpointError, DenseLayer
from .training import (
    CosineLRDecay,
    SGDWithMomentum,
    TrainingDivergedError,
    TrainPlan,
    minibatches,
)

logger = logging.getLogger(__name__)

TEACHER_FORMAT = "seal-kd/teacher-mlp"
TEACHER_VERSION = 1


class LogitFileError(ValueError):
    """A teacher-logit file does not match the expected samples or classes."""


@dataclass
class TeacherNet:
    """ReLU multilayer perceptron over raw features."""
    layers: List[DenseLayer]

    @classmethod
    def initialize(cls, input_dim: int, hidden: Sequence[int], classes: int,
                   rng: np.random.Generator, gain: float = 1.0) -> "TeacherNet":
        widths = [input_dim, *hidden, classes]
        return cls([DenseLayer.initialize(a, b, rng, gain) for a, b in zip(widths, widths[1:])])

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_features

    @property
    def classes(self) -> int:
        return self.layers[-1].out_features

    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.input_dim,) + tuple(layer.out_features for layer in self.layers)

    def parameters(self) -> List[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def watch(self, tape: Tape) -> List[Tuple[Tensor, Tensor]]:
        return [(tape.watch(layer.weight), tape.watch(layer.bias)) for layer in self.layers]

    def forward(self, features, params: Optional[Sequence[Tuple[Tensor, Tensor]]] = None) -> Tensor:
        params = params if params is not None else [(Tensor(l.weight), Tensor(l.bias)) for l in self.layers]
        h = as_tensor(features)
        for weight, bias in params[:-1]:
            h = relu(h @ weight + bias)
        weight, bias = params[-1]
        return h @ weight + bias

    def logits(self, features: np.ndarray) -> np.ndarray:
        return self.forward(features).numpy()

    def to_dict(self) -> dict:
        kinds = ["relu"] * (len(self.layers) - 1) + ["readout"]
        return {
            "format": TEACHER_FORMAT,
            "version": TEACHER_VERSION,
            "classes": self.classes,
            "layers": [layer.to_dict(kind) for layer, kind in zip(self.layers, kinds)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TeacherNet":
        if data.get("format") != TEACHER_FORMAT or data.get("version") != TEACHER_VERSION:
            raise CheckpointError(f"Not a teacher checkpoint (format={data.get('format')!r}, "
                                  f"version={data.get('version')!r})")
        layers = [DenseLayer.from_dict(record) for record in data.get("layers") or []]
        if not layers:
            raise CheckpointError("Teacher checkpoint has no layers")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_features != nxt.in_features:
                raise CheckpointError(f"Teacher layer shapes do not chain: {prev.weight.shape} -> {nxt.weight.shape}")
        return cls(layers)


def save_teacher(net: TeacherNet, path: Union[str, Path]) -> None:
    write_json(path, net.to_dict())


def load_teacher(path: Union[str, Path]) -> TeacherNet:
    if not Path(path).exists():
        raise FileNotFoundError(f"Teacher checkpoint not found: {path}")
    return TeacherNet.from_dict(read_json(path))


def train_teacher(dataset: Dataset, plan: TrainPlan, widths: Sequence[int]) -> Tuple[TeacherNet, TeacherLogits]:
    """Cross-entropy training of an MLP with hidden ``widths``; returns logits for ``dataset``."""
    if dataset.split != "train":
        raise ValueError(f"refusing to train on the '{dataset.split}' split")
    net = TeacherNet.initialize(dataset.dim, widths, dataset.classes, stream(plan.seed, "teacher-init"))
    shuffle_rng = stream(plan.seed, "teacher-shuffle")
    optimizer = SGDWithMomentum(net.parameters(), plan.learning_rate, plan.momentum, plan.weight_decay)
    total_steps = plan.epochs * plan.steps_per_epoch(dataset.size)
    schedule = CosineLRDecay(optimizer, plan.learning_rate, total_steps, plan.cosine)

    step = 0
    for epoch in range(1, plan.epochs + 1):
        loss_sum = 0.0
        for batch in minibatches(dataset.size, plan.batch_size, shuffle_rng):
            schedule.step(step)
            tape = Tape()
            params = net.watch(tape)
            loss = cross_entropy(net.forward(dataset.features[batch], params), dataset.labels[batch]).mean()
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"teacher loss became non-finite at epoch {epoch}", epoch,
                                            {"step": step, "batch": batch.tolist()})
            grads = tape.backward(loss)
            optimizer.step([grads.array(p) for pair in params for p in pair])
            loss_sum += value * len(batch)
            step += 1
        logger.info(f"teacher epoch {epoch}/{plan.epochs} loss {loss_sum / max(dataset.size, 1):.4f}")

    logits = net.logits(dataset.features)
    accuracy = float((np.argmax(logits, axis=1) == dataset.labels).mean()) if dataset.size else 0.0
    logger.info(f"Teacher training accuracy {accuracy:.4f}")
    return net, TeacherLogits(Tensor(logits))


def export_teacher_logits(logits: Union[TeacherLogits, np.ndarray], path: Union[str, Path]) -> None:
    values = logits.numpy() if isinstance(logits, TeacherLogits) else np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("teacher logits must be finite to be exported")
    write_jsonl(path, ({"index": i, "logits": row.tolist()} for i, row in enumerate(values)))


def import_teacher_logits(path: Union[str, Path], classes: Optional[int] = None,
                          count: Optional[int] = None) -> TeacherLogits:
    """Read a teacher-logit file, checking indices, class count and sample count."""
    if not Path(path).exists():
        raise FileNotFoundError(f"Teacher logit file not found: {path}")
    try:
        records = read_jsonl(path)
    except ValueError as e:
        raise LogitFileError(str(e)) from e

    rows = []
    for position, record in enumerate(records):
        if record.get("index") != position or not isinstance(record.get("logits"), list):
            raise LogitFileError(f"{path}: record {position} must be {{\"index\": {position}, \"logits\": [...]}}")
        row = record["logits"]
        expected = classes if classes is not None else (len(rows[0]) if rows else len(row))
        if len(row) != expected:
            raise LogitFileError(f"{path}: expected {expected} classes, found {len(row)} (record {position})")
        rows.append(row)

    if count is not None and len(rows) != count:
        raise LogitFileError(f"{path}: expected {count} records, found {len(rows)}")
    width = classes if classes is not None else (len(rows[0]) if rows else 0)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    if not np.all(np.isfinite(values)):
        raise LogitFileError(f"{path}: logits must be finite")
    return TeacherLogits(Tensor(values))
