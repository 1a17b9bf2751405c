"""Training objectives over per-timestep student logits.

Every loss takes student logits of shape (batch, T, C) (a single (T, C) sample
is promoted to batch 1) and returns the mean over samples of the per-sample
value. ``reduction="none"`` returns the (batch, T) per-timestep contributions
instead, whose mean over both axes equals the reduced loss.

Teacher logits, ELA-modified teacher targets, STA source distributions and STA
weights are constants: they enter the graph through ``stop_gradient`` or as
plain arrays, so no gradient reaches them.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    as_tensor,
    log_softmax,
    minimum,
    reshape,
    scatter,
    select,
    softmax,
    stable_log_softmax,
    stable_softmax,
    stop_gradient,
    sum_,
)
from .snn import TemporalLogits

logger = logging.getLogger(__name__)

METHODS = ("ce-only", "timestep-kd", "ela", "sta", "uta", "seal")
ELA_VARIANTS = ("ours", "S", "A", "AS", "Both")
STA_VARIANTS = ("ours", "no-conf", "no-sim", "dist")
TEACHER_METHODS = ("timestep-kd", "ela", "seal")

SIMILARITY_EPS = 1e-12


@dataclass(frozen=True)
class DistillConfig:
    """Temperatures, term weights and method/variant selectors."""
    temperature: float = 4.0
    cls_temperature: float = 1.0
    sta_temperature: float = 1.0
    ela_temperature: Optional[float] = None
    lambda_kd: float = 1.0
    alpha_ela: float = 0.6
    beta_sta: float = 0.15
    method: str = "seal"
    ela_variant: str = "ours"
    sta_variant: str = "ours"

    def __post_init__(self):
        for name in ("temperature", "cls_temperature", "sta_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.ela_temperature is not None and self.ela_temperature <= 0:
            raise ValueError(f"ela_temperature must be positive, got {self.ela_temperature}")
        for name in ("lambda_kd", "alpha_ela", "beta_sta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got '{self.method}'")
        if self.ela_variant not in ELA_VARIANTS:
            raise ValueError(f"ela_variant must be one of {ELA_VARIANTS}, got '{self.ela_variant}'")
        if self.sta_variant not in STA_VARIANTS:
            raise ValueError(f"sta_variant must be one of {STA_VARIANTS}, got '{self.sta_variant}'")

    @property
    def effective_ela_temperature(self) -> float:
        return self.temperature if self.ela_temperature is None else self.ela_temperature

    @property
    def uses_teacher(self) -> bool:
        return self.method in TEACHER_METHODS


@dataclass(frozen=True)
class TeacherLogits:
    """Time-invariant teacher logits, shape (N, C)."""
    values: Tensor

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeError(f"TeacherLogits must have shape (N, C), got {self.values.shape}")

    @classmethod
    def from_array(cls, values) -> "TeacherLogits":
        tensor = as_tensor(values)
        if tensor.ndim == 1:
            tensor = reshape(tensor, (1,) + tensor.shape)
        return cls(tensor)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def classes(self) -> int:
        return self.values.shape[1]

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def subset(self, indices) -> "TeacherLogits":
        return TeacherLogits(Tensor(self.values.data[np.asarray(indices)]))


@dataclass(frozen=True)
class ErrorMask:
    """``erroneous[b, t]`` iff argmax of the student differs from the label.

    ``c_false`` holds the predicted false class where erroneous and -1 elsewhere.
    The ``AS`` variant flags teacher errors instead. ``teacher_c_false`` is only
    set by the ``Both`` variant: the teacher's false class where both networks
    err, -1 elsewhere.
    """
    erroneous: np.ndarray
    c_false: np.ndarray
    teacher_c_false: Optional[np.ndarray] = None

    @property
    def fraction(self) -> float:
        return float(self.erroneous.mean()) if self.erroneous.size else 0.0


@dataclass
class ObjectiveResult:
    """Total loss plus the unweighted value and weight of every term."""
    total: Tensor
    terms: Dict[str, float] = field(default_factory=dict)
    weights: Dict[str, float] = field(default_factory=dict)
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def distillation(self) -> Optional[Tensor]:
        """Weighted sum of the non-classification terms that enter the total."""
        parts = [self.tensors[name] * self.weights[name]
                 for name in self.tensors if name != "cls" and self.weights[name] != 0]
        if not parts:
            return None
        total = parts[0]
        for part in parts[1:]:
            total = total + part
        return total

    def breakdown(self) -> Dict[str, float]:
        report = {"total": self.total.item()}
        report.update(self.terms)
        return report


# --------------------------------------------------------------------------
# argument normalization
# --------------------------------------------------------------------------

LogitsLike = Union[TemporalLogits, Tensor, np.ndarray]


def _student(logits: LogitsLike) -> Tensor:
    if isinstance(logits, TemporalLogits):
        return logits.values
    return TemporalLogits.from_array(logits).values


def _teacher(teacher, student: Tensor) -> np.ndarray:
    """Teacher logits as a constant broadcast to the student's (batch, T, C)."""
    if isinstance(teacher, TeacherLogits):
        teacher = teacher.values
    values = stop_gradient(as_tensor(teacher)).data
    if values.ndim == 1:
        values = values[None, :]
    if values.ndim == 2:
        values = values[:, None, :]
    if values.shape[-1] != student.shape[-1]:
        raise ShapeError(f"teacher has {values.shape[-1]} classes, student has {student.shape[-1]}")
    try:
        return np.broadcast_to(values, student.shape)
    except ValueError:
        raise ShapeError(f"teacher logits {values.shape} do not match student logits {student.shape}") from None


def _labels(label, leading: Tuple[int, ...], classes: int) -> np.ndarray:
    labels = np.asarray(label)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integer class indices, got {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"label out of range [0, {classes}): {labels.tolist()}")
    if labels.ndim == 1 and len(leading) > 1:
        labels = labels.reshape(labels.shape + (1,) * (len(leading) - 1))
    try:
        return np.broadcast_to(labels, leading).astype(np.int64)
    except ValueError:
        raise ShapeError(f"labels {labels.shape} do not match logits {leading}") from None


def _reduce(per_timestep: Tensor, reduction: str) -> Tensor:
    if reduction == "none":
        return per_timestep
    if reduction == "mean":
        return per_timestep.mean()
    raise ValueError(f"reduction must be 'mean' or 'none', got '{reduction}'")


def _kl_rows(target: np.ndarray, student: Tensor, temperature: float) -> Tensor:
    """KL(softmax(target/τ) ‖ softmax(student/τ)) along the last axis."""
    probs = Tensor(stable_softmax(target, temperature))
    log_target = Tensor(stable_log_softmax(target, temperature))
    return sum_(probs * (log_target - log_softmax(student, temperature)), axis=-1)


# --------------------------------------------------------------------------
# classification and timestep-wise distillation
# --------------------------------------------------------------------------

def cross_entropy(logits, labels, temperature: float = 1.0) -> Tensor:
    """Natural-log cross-entropy per row of (..., C) logits."""
    logits = as_tensor(logits)
    index = _labels(labels, logits.shape[:-1], logits.shape[-1])
    return -select(log_softmax(logits, temperature), index)


def cls_loss(logits: LogitsLike, label, temperature: float = 1.0, reduction: str = "mean") -> Tensor:
    z = _student(logits)
    return _reduce(cross_entropy(z, label, temperature), reduction)


def kd_loss(student: LogitsLike, teacher, temperature: float = 4.0, reduction: str = "mean") -> Tensor:
    z = _student(student)
    return _reduce(_kl_rows(_teacher(teacher, z), z, temperature), reduction)


def error_mask(logits: LogitsLike, label) -> ErrorMask:
    z = _student(logits)
    labels = _labels(label, z.shape[:-1], z.shape[-1])
    predicted = np.argmax(z.data, axis=-1)
    erroneous = predicted != labels
    return ErrorMask(erroneous=erroneous, c_false=np.where(erroneous, predicted, -1))


# --------------------------------------------------------------------------
# error-aware logit alignment
# --------------------------------------------------------------------------

def _equalize(z: Tensor, *indices: np.ndarray) -> Tensor:
    """Set every listed index of each row to the row's minimum over them."""
    floor = select(z, indices[0])
    for index in indices[1:]:
        floor = minimum(floor, select(z, index))
    out = z
    for index in indices:
        out = scatter(out, index, floor)
    return out


def ela_error_mask(student, teacher, label, variant: str = "ours") -> ErrorMask:
    """The classes ``ela_modify`` equalizes, read from the argmax of each side."""
    s_pred = np.argmax(student, axis=-1)
    a_pred = np.argmax(teacher, axis=-1)
    if variant == "AS":
        a_err = a_pred != label
        return ErrorMask(erroneous=a_err, c_false=np.where(a_err, a_pred, -1))
    s_err = s_pred != label
    both = np.where(s_err & (a_pred != label), a_pred, -1) if variant == "Both" else None
    return ErrorMask(erroneous=s_err, c_false=np.where(s_err, s_pred, -1), teacher_c_false=both)


def _checked_mask(mask: ErrorMask, label: np.ndarray, classes: int) -> ErrorMask:
    erroneous = np.asarray(mask.erroneous, dtype=bool)
    c_false = np.asarray(mask.c_false, dtype=np.int64)
    if erroneous.shape != label.shape or c_false.shape != label.shape:
        raise ShapeError(f"error mask {erroneous.shape} does not match logits {label.shape}")
    flagged = c_false[erroneous]
    if flagged.size and (flagged.min() < 0 or flagged.max() >= classes or (flagged == label[erroneous]).any()):
        raise ValueError("error mask c_false must be a class other than the label wherever flagged")
    extra = mask.teacher_c_false
    if extra is not None:
        extra = np.asarray(extra, dtype=np.int64)
        if extra.shape != label.shape:
            raise ShapeError(f"error mask {extra.shape} does not match logits {label.shape}")
    return ErrorMask(erroneous=erroneous, c_false=c_false, teacher_c_false=extra)


def ela_modify(student_t, teacher, label, variant: str = "ours",
               mask: Optional[ErrorMask] = None) -> Tuple[Tensor, Tensor, ErrorMask]:
    """Equalize the truth/false pair at erroneous rows.

    ``student_t`` has shape (..., C); ``teacher`` broadcasts against it and is
    returned as a constant. Rows that are not erroneous under the variant come
    back with bit-identical values.

    Without ``mask`` the pairs come from the argmax of the given logits. Passing
    the mask of an earlier call equalizes the same classes again, so re-applying
    the modification to its own output changes nothing.
    """
    if variant not in ELA_VARIANTS:
        raise ValueError(f"ela variant must be one of {ELA_VARIANTS}, got '{variant}'")
    zs = as_tensor(student_t)
    if isinstance(teacher, TeacherLogits):
        teacher = teacher.values
    target = stop_gradient(as_tensor(teacher)).data
    try:
        target = np.broadcast_to(target, zs.shape)
    except ValueError:
        raise ShapeError(f"teacher {target.shape} does not broadcast to student {zs.shape}") from None
    za = Tensor(target)

    leading = zs.shape[:-1]
    y = _labels(label, leading, zs.shape[-1])
    if mask is None:
        mask = ela_error_mask(zs.data, target, y, variant)
    else:
        mask = _checked_mask(mask, y, zs.shape[-1])
    pair = np.where(mask.erroneous, mask.c_false, y)

    if variant in ("ours", "AS"):
        return _equalize(zs, y, pair), _equalize(za, y, pair), mask
    if variant == "S":
        return _equalize(zs, y, pair), za, mask
    if variant == "A":
        return zs, _equalize(za, y, pair), mask
    third = pair
    if mask.teacher_c_false is not None:
        third = np.where(mask.teacher_c_false >= 0, mask.teacher_c_false, pair)
    return _equalize(zs, y, pair, third), _equalize(za, y, pair, third), mask


def ela_loss(student: LogitsLike, teacher, label, temperature: float = 4.0,
             variant: str = "ours", reduction: str = "mean", mask: Optional[ErrorMask] = None) -> Tensor:
    z = _student(student)
    modified_student, modified_teacher, _ = ela_modify(z, _teacher(teacher, z), label, variant, mask)
    return _reduce(_kl_rows(modified_teacher.data, modified_student, temperature), reduction)


# --------------------------------------------------------------------------
# temporal alignment
# --------------------------------------------------------------------------

def sta_confidence(logits_t, temperature: float = 1.0):
    """1 − H/ln C of softmax(z/τ); a float for one vector, an array otherwise."""
    values = np.asarray(logits_t.data if isinstance(logits_t, Tensor) else logits_t, dtype=np.float64)
    classes = values.shape[-1]
    if classes < 2:
        raise ShapeError(f"confidence needs at least 2 classes, got {classes}")
    probs = stable_softmax(values, temperature)
    entropy = -(probs * stable_log_softmax(values, temperature)).sum(axis=-1)
    conf = np.clip(1.0 - entropy / np.log(classes), 0.0, 1.0)
    return float(conf) if conf.ndim == 0 else conf


def sta_similarity(logits_t, logits_u) -> float:
    """Cosine similarity; 0 when either norm is below 1e-12."""
    a = np.asarray(logits_t.data if isinstance(logits_t, Tensor) else logits_t, dtype=np.float64)
    b = np.asarray(logits_u.data if isinstance(logits_u, Tensor) else logits_u, dtype=np.float64)
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a < SIMILARITY_EPS or norm_b < SIMILARITY_EPS:
        return 0.0
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))


def pairwise_similarity(values: np.ndarray) -> np.ndarray:
    """Cosine similarity between every pair of timesteps: (..., T, C) -> (..., T, T)."""
    norms = np.linalg.norm(values, axis=-1)
    safe = np.where(norms < SIMILARITY_EPS, 1.0, norms)
    unit = values / safe[..., None]
    sim = np.einsum("...tc,...uc->...tu", unit, unit)
    degenerate = norms < SIMILARITY_EPS
    sim = np.where(degenerate[..., :, None] | degenerate[..., None, :], 0.0, sim)
    return np.clip(sim, -1.0, 1.0)


def sta_weights(logits: LogitsLike, temperature: float = 1.0, variant: str = "ours") -> np.ndarray:
    """Row-stochastic (batch, T, T) weights with a zero diagonal.

    A (T, C) input gives a (T, T) matrix.
    """
    single = not isinstance(logits, TemporalLogits) and np.ndim(
        logits.data if isinstance(logits, Tensor) else logits) == 2
    values = _student(logits).data
    timesteps = values.shape[1]
    if timesteps < 2:
        raise ValueError(f"temporal alignment needs T >= 2, got {timesteps}")
    if variant not in STA_VARIANTS:
        raise ValueError(f"sta variant must be one of {STA_VARIANTS}, got '{variant}'")

    conf = sta_confidence(values, temperature)
    sim = pairwise_similarity(values)
    source_conf = np.broadcast_to(conf[:, None, :], sim.shape)
    if variant == "ours":
        scores = source_conf * sim
    elif variant == "no-conf":
        scores = sim
    elif variant == "no-sim":
        scores = np.array(source_conf)
    else:
        scores = source_conf * (1.0 - sim)

    scores = np.array(scores)
    diagonal = np.eye(timesteps, dtype=bool)
    scores[..., diagonal] = -np.inf
    weights = stable_softmax(scores)
    weights[..., diagonal] = 0.0
    return weights[0] if single else weights


def _temporal_alignment(z: Tensor, weights: np.ndarray, temperature: float) -> Tensor:
    """Per-target sum Σ_{t'} w[t, t']·KL(p(z_{t'}) ‖ p(z_t)), shape (batch, T)."""
    batch, timesteps, classes = z.shape
    sources = stop_gradient(z).data
    probs = stable_softmax(sources, temperature)
    log_sources = stable_log_softmax(sources, temperature)
    coef = Tensor(weights[..., None] * probs[:, None, :, :])
    log_targets = reshape(log_softmax(z, temperature), (batch, timesteps, 1, classes))
    diff = Tensor(log_sources[:, None, :, :]) - log_targets
    return sum_(coef * diff, axis=(2, 3))


def sta_loss(logits: LogitsLike, temperature: float = 1.0, variant: str = "ours",
             reduction: str = "mean") -> Tensor:
    z = _student(logits)
    weights = sta_weights(z.data, temperature, variant)
    return _reduce(_temporal_alignment(z, weights, temperature), reduction)


def uta_loss(logits: LogitsLike, temperature: float = 1.0, reduction: str = "mean") -> Tensor:
    z = _student(logits)
    timesteps = z.shape[1]
    if timesteps < 2:
        raise ValueError(f"temporal alignment needs T >= 2, got {timesteps}")
    uniform = (1.0 - np.eye(timesteps)) / (timesteps - 1)
    weights = np.broadcast_to(uniform, (z.shape[0], timesteps, timesteps))
    return _reduce(_temporal_alignment(z, weights, temperature), reduction)


# --------------------------------------------------------------------------
# combined objectives
# --------------------------------------------------------------------------

def _term(name: str, student: Tensor, teacher, label, config: DistillConfig, reduction: str) -> Tensor:
    if name == "cls":
        return cls_loss(student, label, config.cls_temperature, reduction)
    if name == "kd":
        return kd_loss(student, teacher, config.temperature, reduction)
    if name == "ela":
        return ela_loss(student, teacher, label, config.effective_ela_temperature,
                        config.ela_variant, reduction)
    if name == "sta":
        return sta_loss(student, config.sta_temperature, config.sta_variant, reduction)
    if name == "uta":
        return uta_loss(student, config.sta_temperature, reduction)
    raise ValueError(f"Unknown loss term '{name}'")


def method_terms(config: DistillConfig) -> Dict[str, float]:
    """Weight of every term the configured method reports, cls first."""
    return {
        "ce-only": {"cls": 1.0},
        "timestep-kd": {"cls": 1.0, "kd": config.lambda_kd},
        "ela": {"cls": 1.0, "ela": config.alpha_ela},
        "sta": {"cls": 1.0, "sta": config.beta_sta},
        "uta": {"cls": 1.0, "uta": config.beta_sta},
        "seal": {"cls": 1.0, "ela": config.alpha_ela, "sta": config.beta_sta},
    }[config.method]


def objective(student: LogitsLike, teacher, label, config: DistillConfig,
              reduction: str = "mean") -> ObjectiveResult:
    """Configured objective with its per-term breakdown.

    Terms with weight 0 are evaluated for the breakdown but left out of the total.
    """
    z = _student(student)
    weights = method_terms(config)
    if teacher is None and any(name in ("kd", "ela") for name in weights):
        raise ValueError(f"method '{config.method}' needs teacher logits")

    tensors = {name: _term(name, z, teacher, label, config, reduction) for name in weights}
    total = tensors["cls"]
    for name, weight in weights.items():
        if name != "cls" and weight != 0:
            total = total + tensors[name] * weight

    terms = {}
    if reduction == "mean":
        terms = {name: tensor.item() for name, tensor in tensors.items()}
    return ObjectiveResult(total=total, terms=terms, weights=dict(weights), tensors=tensors)


def baseline_objective(student: LogitsLike, teacher, label, config: DistillConfig) -> Tensor:
    """CLS + λ·KD."""
    z = _student(student)
    return (cls_loss(z, label, config.cls_temperature)
            + kd_loss(z, teacher, config.temperature) * config.lambda_kd)


def seal_objective(student: LogitsLike, teacher, label, config: DistillConfig) -> ObjectiveResult:
    """CLS + α·ELA + β·STA, whatever method the config names."""
    return objective(student, teacher, label, replace(config, method="seal"))
