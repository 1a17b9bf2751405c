"""Layer-wise gradient statistics and temporal-accuracy analytics.

Per-layer gradients are taken with respect to each affine layer's weight
matrix (biases excluded). A statistic at timestep t uses that timestep's
contribution to the loss, so every sample yields one value per layer.

Diagnostics file (JSONL), one record per layer per statistic::

    {"record": "layer_stat", "statistic": "pair_share", "condition": "erroneous",
     "method": "seal", "layer": 0, "mean": 0.71, "std": 0.05, "count": 5,
     "values": [...], "samples": [...], "timesteps": [...]}

followed by one ``{"record": "temporal_accuracy", ...}`` record. Undefined
values are written as null and left out of mean/std/count.

Heatmap CSV: header ``0,1,...,C-1``, one row per timestep.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..utils.seeding import stream
from .autodiff import Tape, Tensor, getitem
from .data import Dataset
from .losses import DistillConfig, TeacherLogits, objective, sta_weights
from .snn import SpikingNet, TemporalLogits, encode_input, forward_temporal

logger = logging.getLogger(__name__)

CONDITIONS = ("erroneous", "weak", "correct")
NORM_EPS = 1e-12

# Loss term whose gradient a statistic inspects, per training method.
PAIR_SHARE_TERM = {"seal": "ela", "ela": "ela", "timestep-kd": "kd", "sta": "sta", "uta": "uta"}
REF_ALIGN_TERM = {"seal": "sta", "sta": "sta", "uta": "uta", "ela": "ela", "timestep-kd": "kd"}


@dataclass(frozen=True)
class LayerStat:
    """Mean and population std of one statistic over the defined per-sample values."""
    layer: int
    mean: Optional[float]
    std: Optional[float]
    count: int
    values: Tuple[Optional[float], ...] = ()

    @classmethod
    def from_values(cls, layer: int, values: Sequence[Optional[float]]) -> "LayerStat":
        defined = np.array([v for v in values if v is not None], dtype=np.float64)
        if defined.size == 0:
            return cls(layer, None, None, 0, tuple(values))
        return cls(layer, float(defined.mean()), float(defined.std()), int(defined.size), tuple(values))

    @property
    def value(self) -> Optional[float]:
        return self.mean


def combine_stats(per_sample: Sequence[Sequence[LayerStat]]) -> List[LayerStat]:
    """Merge per-sample LayerStats layer by layer."""
    if not per_sample:
        return []
    layers = len(per_sample[0])
    return [LayerStat.from_values(l, [v for stats in per_sample for v in stats[l].values])
            for l in range(layers)]


def timestep_margins(logits: np.ndarray, labels) -> Tuple[np.ndarray, np.ndarray]:
    """Margin z_y − z_c and the top non-truth class c for every (sample, timestep)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    labels = labels.reshape(labels.shape + (1,) * (logits.ndim - 1 - labels.ndim))
    labels = np.broadcast_to(labels, logits.shape[:-1])
    truth = np.take_along_axis(logits, labels[..., None], axis=-1)[..., 0]
    others = np.array(logits)
    np.put_along_axis(others, labels[..., None], -np.inf, axis=-1)
    c_false = np.argmax(others, axis=-1)
    rival = np.take_along_axis(logits, c_false[..., None], axis=-1)[..., 0]
    return truth - rival, c_false


@dataclass(frozen=True)
class TimestepCondition:
    """Erroneous / weak / correct label per (sample, timestep).

    Weak timesteps are correct ones whose margin lies below the median margin
    of all correct timesteps in the batch.
    """
    labels: np.ndarray
    margins: np.ndarray
    median: Optional[float]

    @classmethod
    def classify(cls, logits, labels) -> "TimestepCondition":
        values = logits.numpy() if isinstance(logits, TemporalLogits) else np.asarray(logits, dtype=np.float64)
        labels = np.asarray(labels)
        margins, _ = timestep_margins(values, labels)
        correct = np.argmax(values, axis=-1) == labels[:, None]
        median = float(np.median(margins[correct])) if correct.any() else None
        names = np.full(correct.shape, "erroneous", dtype=object)
        names[correct] = "correct"
        if median is not None:
            names[correct & (margins < median)] = "weak"
        return cls(labels=names, margins=margins, median=median)

    def timesteps(self, sample: int, condition: str) -> List[int]:
        return [int(t) for t in np.flatnonzero(self.labels[sample] == condition)]


class _SampleGraph:
    """One recorded forward pass of a single sample; backward from any scalar of it."""

    def __init__(self, net: SpikingNet, encoded: np.ndarray):
        self.tape = Tape()
        self.params = net.watch(self.tape)
        self.logits = forward_temporal(net, np.asarray(encoded)[None], params=self.params).values

    @property
    def values(self) -> np.ndarray:
        return self.logits.data[0]

    def logit(self, t: int, c) -> Tensor:
        return getitem(self.logits, (0, t, c))

    def weight_grads(self, scalar: Optional[Tensor]) -> List[np.ndarray]:
        if scalar is None or not scalar.tracked:
            return [np.zeros(weight.size) for weight, _ in self.params]
        grads = self.tape.backward(scalar)
        return [grads.array(weight).reshape(-1) for weight, _ in self.params]

    def term_at(self, name: Optional[str], t: int, label: int, config: DistillConfig,
                teacher) -> Optional[Tensor]:
        if name is None:
            return None
        result = objective(self.logits, teacher, np.array([label]), config, reduction="none")
        tensor = result.tensors.get(name)
        return None if tensor is None else getitem(tensor, (0, t))


def _teacher_row(teacher) -> Optional[np.ndarray]:
    if teacher is None:
        return None
    values = teacher.numpy() if isinstance(teacher, TeacherLogits) else np.asarray(teacher, dtype=np.float64)
    return values.reshape(1, -1)


def pair_share(net: SpikingNet, encoded: np.ndarray, t: int, label: int, config: DistillConfig,
               teacher=None) -> List[LayerStat]:
    """(D_true + D_false) / (D_true + D_false + D_rest) per layer at erroneous timestep ``t``.

    ``encoded`` is one encoded sample of shape (T, D).
    """
    graph = _SampleGraph(net, encoded)
    z_t = graph.values[t]
    c_false = int(np.argmax(z_t))
    if c_false == label:
        raise ValueError(f"timestep {t} is not erroneous")

    term = PAIR_SHARE_TERM.get(config.method)
    loss = graph.term_at(term, t, label, config, _teacher_row(teacher))
    g_loss = graph.weight_grads(loss)
    g_true = graph.weight_grads(graph.logit(t, label))
    g_false = graph.weight_grads(graph.logit(t, c_false))
    rest = [c for c in range(len(z_t)) if c not in (label, c_false)]
    g_rest = graph.weight_grads(graph.logit(t, rest).mean()) if rest else [np.zeros_like(g) for g in g_loss]

    stats = []
    for layer, (gl, gt, gf, gr) in enumerate(zip(g_loss, g_true, g_false, g_rest)):
        d_true, d_false, d_rest = abs(gl @ gt), abs(gl @ gf), abs(gl @ gr)
        denom = d_true + d_false + d_rest
        value = float((d_true + d_false) / denom) if denom > 0 else None
        stats.append(LayerStat.from_values(layer, [value]))
    return stats


def _cosine(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a < NORM_EPS or norm_b < NORM_EPS:
        return None
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))


def ref_align(net: SpikingNet, encoded: np.ndarray, t: int, label: int, config: DistillConfig,
              teacher=None, weights: Optional[np.ndarray] = None,
              loss_fn: Optional[Callable[[Tensor, Tensor], Tensor]] = None) -> List[LayerStat]:
    """Cosine between the alignment gradient and ∇(m_t − m_ref)² per layer at weak timestep ``t``.

    ``weights`` defaults to the STA weights of the sample's own logits.
    ``loss_fn(logits, discrepancy)`` replaces the alignment loss when given.
    """
    graph = _SampleGraph(net, encoded)
    values = graph.values
    timesteps = values.shape[0]
    if timesteps < 2:
        raise ValueError(f"reference alignment needs T >= 2, got {timesteps}")
    if int(np.argmax(values[t])) != label:
        raise ValueError(f"timestep {t} is not correct")

    if weights is None:
        weights = sta_weights(values, config.sta_temperature, config.sta_variant)
    margins, c_false = timestep_margins(values, label)
    reference = float(np.asarray(weights)[t] @ margins)
    margin_t = graph.logit(t, label) - graph.logit(t, int(c_false[t]))
    gap = margin_t - reference
    discrepancy = gap * gap

    if loss_fn is not None:
        loss = loss_fn(graph.logits, discrepancy)
    else:
        term = REF_ALIGN_TERM.get(config.method)
        loss = graph.term_at(term, t, label, config, _teacher_row(teacher))
    g_loss = graph.weight_grads(loss)
    g_disc = graph.weight_grads(discrepancy)
    return [LayerStat.from_values(layer, [_cosine(gl, gd)])
            for layer, (gl, gd) in enumerate(zip(g_loss, g_disc))]


def kd_ratio(net: SpikingNet, encoded: np.ndarray, t: int, label: int, config: DistillConfig,
             teacher=None) -> List[LayerStat]:
    """‖∇L_distill‖ / ‖∇L_CLS‖ per layer at correct timestep ``t``."""
    graph = _SampleGraph(net, encoded)
    if int(np.argmax(graph.values[t])) != label:
        raise ValueError(f"timestep {t} is not correct")

    result = objective(graph.logits, _teacher_row(teacher), np.array([label]), config, reduction="none")
    cls_t = getitem(result.tensors["cls"], (0, t))
    distill = result.distillation
    g_cls = graph.weight_grads(cls_t)
    g_distill = graph.weight_grads(getitem(distill, (0, t)) if distill is not None else None)

    stats = []
    for layer, (gd, gc) in enumerate(zip(g_distill, g_cls)):
        task = np.linalg.norm(gc)
        value = float(np.linalg.norm(gd) / task) if task >= NORM_EPS else None
        stats.append(LayerStat.from_values(layer, [value]))
    return stats


@dataclass(frozen=True)
class TemporalAccuracyReport:
    samples: int
    timesteps: int
    per_timestep_accuracy: List[float]
    aggregated_accuracy: float
    correct_count_histogram: List[int]
    finally_correct: int
    with_erroneous_timestep_fraction: Optional[float]
    never_correct_at_any_timestep: int

    def to_dict(self) -> dict:
        return asdict(self)


def temporal_accuracy_report(logits, labels) -> TemporalAccuracyReport:
    """Per-timestep and aggregated accuracy, plus how many timesteps finally-correct samples got right."""
    values = logits.numpy() if isinstance(logits, TemporalLogits) else np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if values.ndim != 3 or values.shape[0] == 0:
        raise ValueError("temporal accuracy needs a non-empty (N, T, C) logit array")
    timesteps = values.shape[1]
    correct = np.argmax(values, axis=-1) == labels[:, None]
    final = np.argmax(values.mean(axis=1), axis=-1) == labels
    counts = correct.sum(axis=1)[final]
    histogram = np.bincount(counts, minlength=timesteps + 1)
    finally_correct = int(final.sum())
    some_wrong = int((counts < timesteps).sum())
    return TemporalAccuracyReport(
        samples=int(values.shape[0]),
        timesteps=int(timesteps),
        per_timestep_accuracy=[float(v) for v in correct.mean(axis=0)],
        aggregated_accuracy=float(final.mean()),
        correct_count_histogram=[int(n) for n in histogram],
        finally_correct=finally_correct,
        with_erroneous_timestep_fraction=some_wrong / finally_correct if finally_correct else None,
        never_correct_at_any_timestep=int(histogram[0]),
    )


def export_logit_heatmap(logits, path: Union[str, Path]) -> None:
    """Write one sample's (T, C) logits as CSV."""
    values = logits.numpy() if isinstance(logits, TemporalLogits) else np.asarray(
        logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    if values.ndim == 3 and values.shape[0] == 1:
        values = values[0]
    if values.ndim != 2:
        raise ValueError(f"heatmap needs the (T, C) logits of one sample, got shape {values.shape}")
    if values.size == 0:
        raise ValueError("heatmap of an empty logit tensor")
    frame = pd.DataFrame(values, columns=[str(c) for c in range(values.shape[1])])
    try:
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise OSError(f"Cannot write heatmap to {path}: {e}") from e


def read_logit_heatmap(path: Union[str, Path]) -> np.ndarray:
    return pd.read_csv(path, float_precision="round_trip").to_numpy(dtype=np.float64)


STATISTICS: Dict[str, Tuple[str, Callable[..., List[LayerStat]]]] = {
    "pair_share": ("erroneous", pair_share),
    "ref_align": ("weak", ref_align),
    "kd_ratio": ("correct", kd_ratio),
}


def run_diagnostics(net: SpikingNet, dataset: Dataset, teacher: Optional[TeacherLogits],
                    config: DistillConfig, *, samples: int = 5, seed: int = 0,
                    encoding: str = "constant-current", all_timesteps: bool = False) -> List[dict]:
    """All layer statistics over up to ``samples`` randomly chosen samples per condition.

    Each sample contributes its first qualifying timestep, or every qualifying
    timestep when ``all_timesteps`` is set.
    """
    if dataset.size == 0:
        raise ValueError("diagnostics need a non-empty dataset")
    if config.uses_teacher and (teacher is None or teacher.count != dataset.size):
        raise ValueError(f"method '{config.method}' needs teacher logits for all {dataset.size} samples")
    teacher_values = teacher.numpy() if teacher is not None and teacher.count == dataset.size else None

    encoded = encode_input(dataset.features, encoding, net.timesteps, stream(seed, "encode-diagnostics"))
    logits = forward_temporal(net, encoded).numpy()
    conditions = TimestepCondition.classify(logits, dataset.labels)
    rng = stream(seed, "diagnostics-samples")

    records = []
    for statistic, (condition, fn) in STATISTICS.items():
        candidates = [i for i in range(dataset.size) if conditions.timesteps(i, condition)]
        if statistic == "ref_align" and net.timesteps < 2:
            candidates = []
        chosen = sorted(int(i) for i in rng.choice(candidates, size=min(samples, len(candidates)),
                                                   replace=False)) if candidates else []
        per_sample, sample_ids, timestep_ids = [], [], []
        for index in chosen:
            qualifying = conditions.timesteps(index, condition)
            for t in (qualifying if all_timesteps else qualifying[:1]):
                row = teacher_values[index] if teacher_values is not None else None
                per_sample.append(fn(net, encoded[index], t, int(dataset.labels[index]), config, row))
                sample_ids.append(index)
                timestep_ids.append(t)
        stats = combine_stats(per_sample) or [LayerStat.from_values(l, []) for l in range(len(net.layers))]
        for stat in stats:
            records.append({
                "record": "layer_stat",
                "statistic": statistic,
                "condition": condition,
                "method": config.method,
                "layer": stat.layer,
                "mean": stat.mean,
                "std": stat.std,
                "count": stat.count,
                "values": list(stat.values),
                "samples": sample_ids,
                "timesteps": timestep_ids,
            })
        logger.info(f"{statistic} over {len(per_sample)} {condition} timesteps: "
                    f"{[s.mean for s in stats]}")

    report = temporal_accuracy_report(logits, dataset.labels)
    records.append({"record": "temporal_accuracy", "split": dataset.split, **report.to_dict()})
    return records
