"""Momentum SGD, cosine learning-rate decay and the student training loop."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np

from ..utils.seeding import stream
from .autodiff import Tape
from .data import Dataset
from .losses import DistillConfig, TeacherLogits, error_mask, objective
from .snn import NetSpec, SpikingNet, encode_input, forward_temporal

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """The loss became non-finite; ``snapshot`` describes the failing batch."""

    def __init__(self, message: str, epoch: int, snapshot: Optional[dict] = None):
        super().__init__(message)
        self.epoch = epoch
        self.snapshot = snapshot or {}


@dataclass(frozen=True)
class TrainPlan:
    """Optimizer settings shared by teacher and student training.

    ``checkpoint_every`` = 0 keeps only the final snapshot.
    """
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    cosine: bool = True
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be non-negative, got {self.checkpoint_every}")

    def steps_per_epoch(self, samples: int) -> int:
        return math.ceil(samples / self.batch_size) if samples else 0


class SGDWithMomentum:
    """SGD with heavy-ball momentum and L2 weight decay, updating arrays in place.

    v ← μ·v + lr·(g + wd·x);  x ← x − v
    """

    def __init__(self, params: List[np.ndarray], lr: float = 0.1, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"{len(grads)} gradients for {len(self.params)} parameters")
        for param, grad, velocity in zip(self.params, grads, self.velocities):
            if self.weight_decay:
                grad = grad + self.weight_decay * param
            velocity *= self.momentum
            velocity += self.lr * grad
            param -= velocity


def cosine_lr(base: float, step: int, total_steps: int) -> float:
    """Half-period cosine from ``base`` at step 0 towards 0 at step ``total_steps``.

    Every update inside the schedule gets a positive rate; the last one uses step
    total_steps − 1.
    """
    if total_steps <= 0:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class CosineLRDecay:
    """Sets ``optimizer.lr`` per step; a constant rate when disabled."""

    def __init__(self, optimizer: SGDWithMomentum, initial_lr: float, total_steps: int,
                 enabled: bool = True):
        self.optimizer = optimizer
        self.initial_lr = initial_lr
        self.total_steps = total_steps
        self.enabled = enabled

    def step(self, current_step: int) -> float:
        lr = cosine_lr(self.initial_lr, current_step, self.total_steps) if self.enabled else self.initial_lr
        self.optimizer.lr = lr
        return lr


def minibatches(samples: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(samples)
    for start in range(0, samples, batch_size):
        yield order[start:start + batch_size]


def predict_temporal(net: SpikingNet, features: np.ndarray, encoding: str, seed: int,
                     batch_size: int = 256) -> np.ndarray:
    """Per-timestep logits (N, T, C) with no tape."""
    rng = stream(seed, "encode-eval")
    chunks = []
    for start in range(0, len(features), batch_size):
        encoded = encode_input(features[start:start + batch_size], encoding, net.timesteps, rng)
        chunks.append(forward_temporal(net, encoded).numpy())
    if not chunks:
        return np.zeros((0, net.timesteps, net.classes))
    return np.concatenate(chunks, axis=0)


def accuracy_summary(logits: np.ndarray, labels: np.ndarray) -> Dict[str, object]:
    """Accuracy at each timestep and of the time-averaged logits."""
    if len(labels) == 0:
        return {"per_timestep_accuracy": [], "aggregated_accuracy": None}
    correct = np.argmax(logits, axis=-1) == labels[:, None]
    aggregated = np.argmax(logits.mean(axis=1), axis=-1) == labels
    return {
        "per_timestep_accuracy": [float(v) for v in correct.mean(axis=0)],
        "aggregated_accuracy": float(aggregated.mean()),
    }


def replay_loss(net: SpikingNet, dataset: Dataset, teacher: Optional[TeacherLogits],
                config: DistillConfig, encoding: str, seed: int) -> float:
    """Objective over the whole dataset in one batch; depends only on the weights."""
    encoded = encode_input(dataset.features, encoding, net.timesteps, stream(seed, "encode-replay"))
    logits = forward_temporal(net, encoded)
    return objective(logits, teacher, dataset.labels, config).total.item()


@dataclass
class TrainingResult:
    net: SpikingNet
    metrics: List[dict] = field(default_factory=list)
    checkpoints: Dict[int, SpikingNet] = field(default_factory=dict)


def _check_teacher(dataset: Dataset, teacher: Optional[TeacherLogits], config: DistillConfig) -> None:
    if not config.uses_teacher:
        return
    if teacher is None:
        raise ValueError(f"method '{config.method}' needs teacher logits for the training set")
    if teacher.count != dataset.size:
        raise ValueError(f"teacher logits cover {teacher.count} samples, training set has {dataset.size}")
    if teacher.classes != dataset.classes:
        raise ValueError(f"teacher logits have {teacher.classes} classes, dataset has {dataset.classes}")


def train_student(dataset: Dataset, teacher: Optional[TeacherLogits], spec: NetSpec, plan: TrainPlan,
                  config: DistillConfig, *, eval_dataset: Optional[Dataset] = None,
                  on_checkpoint: Optional[Callable[[int, SpikingNet, dict], None]] = None) -> TrainingResult:
    """Train a spiking student with the configured objective.

    Only ``dataset`` (which must carry the train split) feeds gradient updates;
    ``eval_dataset`` is scored after every epoch.
    """
    if dataset.split != "train":
        raise ValueError(f"refusing to train on the '{dataset.split}' split")
    if dataset.size == 0:
        raise ValueError("training set is empty")
    _check_teacher(dataset, teacher, config)

    net = SpikingNet.initialize(dataset.dim, dataset.classes, spec, stream(plan.seed, "student-init"))
    shuffle_rng = stream(plan.seed, "student-shuffle")
    encode_rng = stream(plan.seed, "encode-train")
    optimizer = SGDWithMomentum(net.parameters(), plan.learning_rate, plan.momentum, plan.weight_decay)
    total_steps = plan.epochs * plan.steps_per_epoch(dataset.size)
    schedule = CosineLRDecay(optimizer, plan.learning_rate, total_steps, plan.cosine)
    teacher_values = teacher.numpy() if config.uses_teacher else None

    logger.info(f"Training student: method={config.method}, hidden={spec.hidden}, T={spec.timesteps}, "
                f"{plan.epochs} epochs x {plan.steps_per_epoch(dataset.size)} steps")

    result = TrainingResult(net=net)
    step = 0
    for epoch in range(1, plan.epochs + 1):
        loss_sum = 0.0
        term_sums: Dict[str, float] = {}
        erroneous = 0
        slots = 0
        for batch in minibatches(dataset.size, plan.batch_size, shuffle_rng):
            lr = schedule.step(step)
            encoded = encode_input(dataset.features[batch], spec.encoding, spec.timesteps, encode_rng)
            tape = Tape()
            params = net.watch(tape)
            logits = forward_temporal(net, encoded, params=params)
            batch_teacher = teacher_values[batch] if teacher_values is not None else None
            labels = dataset.labels[batch]
            outcome = objective(logits, batch_teacher, labels, config)

            loss = outcome.total.item()
            if not np.isfinite(loss):
                snapshot = {"step": step, "learning_rate": lr, "batch": batch.tolist(), "terms": outcome.terms}
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {step}", epoch, snapshot)

            grads = tape.backward(outcome.total)
            optimizer.step([grads.array(p) for pair in params for p in pair])

            mask = error_mask(logits, labels)
            erroneous += int(mask.erroneous.sum())
            slots += mask.erroneous.size
            loss_sum += loss * len(batch)
            for name, value in outcome.terms.items():
                term_sums[name] = term_sums.get(name, 0.0) + value * len(batch)
            step += 1

        record = {
            "record": "epoch",
            "epoch": epoch,
            "learning_rate": optimizer.lr,
            "loss": loss_sum / dataset.size,
            "terms": {name: value / dataset.size for name, value in term_sums.items()},
            "erroneous_fraction": erroneous / slots,
        }
        train_logits = predict_temporal(net, dataset.features, spec.encoding, plan.seed)
        record.update(accuracy_summary(train_logits, dataset.labels))
        if eval_dataset is not None:
            eval_logits = predict_temporal(net, eval_dataset.features, spec.encoding, plan.seed)
            summary = accuracy_summary(eval_logits, eval_dataset.labels)
            record[f"{eval_dataset.split}_per_timestep_accuracy"] = summary["per_timestep_accuracy"]
            record[f"{eval_dataset.split}_aggregated_accuracy"] = summary["aggregated_accuracy"]

        is_checkpoint = epoch == plan.epochs or (plan.checkpoint_every and epoch % plan.checkpoint_every == 0)
        if is_checkpoint:
            snapshot = net.copy()
            record["checkpoint_loss"] = replay_loss(snapshot, dataset, teacher, config, spec.encoding, plan.seed)
            result.checkpoints[epoch] = snapshot
            if on_checkpoint is not None:
                on_checkpoint(epoch, snapshot, record)

        result.metrics.append(record)
        logger.info(f"epoch {epoch}/{plan.epochs} loss {record['loss']:.4f} "
                    f"terms {', '.join(f'{k}={v:.4f}' for k, v in record['terms'].items())} "
                    f"acc {record['aggregated_accuracy']:.3f} erroneous {record['erroneous_fraction']:.3f}")
        if not np.isfinite(record["loss"]):
            raise TrainingDivergedError(f"non-finite epoch loss at epoch {epoch}", epoch, {"record": record})

    return result

