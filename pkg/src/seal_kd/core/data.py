"""Datasets: seeded synthetic clusters and the CSV dataset format.

CSV layout: a header row ``f0,f1,...,f{D-1},label`` followed by one row per
sample. Features are decimals in [0, 1] written with 17 significant digits,
the label is an integer class index. Line numbers in error messages count the
header as line 1.
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..utils.seeding import stream

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
_PARSER_LINE = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


class DatasetError(ValueError):
    """A dataset file or array violates the dataset format."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str
    classes: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels)
        if features.ndim != 2:
            raise DatasetError(f"features must be a 2-D array, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise DatasetError(f"{labels.shape[0] if labels.ndim else 0} labels for {features.shape[0]} samples")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise DatasetError(f"labels must be integers, got {labels.dtype}")
        labels = labels.astype(np.int64)
        if self.split not in SPLITS:
            raise DatasetError(f"split must be one of {SPLITS}, got '{self.split}'")
        if self.classes < 2:
            raise DatasetError(f"a dataset needs at least 2 classes, got {self.classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise DatasetError(f"labels out of range [0, {self.classes})")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features contain non-finite values")
        if features.size and (features.min() < 0.0 or features.max() > 1.0):
            raise DatasetError("features must lie in [0, 1]")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.split, self.classes)

    def class_counts(self) -> Dict[int, int]:
        counts = np.bincount(self.labels, minlength=self.classes)
        return {c: int(n) for c, n in enumerate(counts)}


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class clusters around seeded centroids."""
    classes: int = 5
    dim: int = 16
    samples_per_class: int = 100
    test_samples_per_class: int = 50
    spread: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"classes must be at least 2, got {self.classes}")
        if self.dim < 1:
            raise ValueError(f"dim must be at least 1, got {self.dim}")
        if self.samples_per_class < 1 or self.test_samples_per_class < 1:
            raise ValueError("samples per class must be at least 1 for both splits")
        if not self.spread > 0:
            raise ValueError(f"spread must be positive, got {self.spread}")


def centroids(spec: SyntheticSpec) -> np.ndarray:
    """Class centres, kept away from the clipping boundary."""
    rng = stream(spec.seed, "synthetic-centroids")
    return rng.uniform(0.15, 0.85, size=(spec.classes, spec.dim))


def _draw(spec: SyntheticSpec, centres: np.ndarray, per_class: int, split: str) -> Dataset:
    rng = stream(spec.seed, f"synthetic-{split}")
    labels = np.repeat(np.arange(spec.classes), per_class)
    noise = rng.normal(0.0, spec.spread, size=(labels.size, spec.dim))
    features = np.clip(centres[labels] + noise, 0.0, 1.0)
    return Dataset(features, labels, split, spec.classes)


def gen_synthetic(spec: SyntheticSpec) -> Tuple[Dataset, Dataset]:
    centres = centroids(spec)
    train = _draw(spec, centres, spec.samples_per_class, "train")
    test = _draw(spec, centres, spec.test_samples_per_class, "test")
    logger.info(f"Generated {train.size} train / {test.size} test samples "
                f"({spec.classes} classes, {spec.dim} features, spread {spec.spread})")
    return train, test


def write_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    columns = [f"f{i}" for i in range(dataset.dim)]
    frame = pd.DataFrame(dataset.features, columns=columns)
    frame["label"] = dataset.labels
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")


def _parse_number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        if match:
            expected, line, found = match.groups()
            raise DatasetError(f"{path}: line {line}: ragged row "
                               f"(expected {expected} fields, found {found})") from None
        raise DatasetError(f"{path}: {e}") from None
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: file is empty") from None


def load_csv(path: Union[str, Path], split: str = "train", classes: Optional[int] = None) -> Dataset:
    """Parse a dataset CSV, validating shape, numbers, labels and feature range.

    ``classes`` defaults to the largest label plus one.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    frame = _read_frame(path)
    if frame.shape[1] < 2:
        raise DatasetError(f"{path}: need at least one feature column and a label column")

    width = frame.shape[1]
    for row, missing in enumerate(frame.isna().to_numpy()):
        if missing.any():
            found = int(width - missing.sum())
            raise DatasetError(f"{path}: line {row + 2}: ragged row (expected {width} fields, found {found})")

    numeric = frame.apply(lambda column: column.map(_parse_number))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DatasetError(f"{path}: line {row + 2}: column '{frame.columns[col]}' "
                           f"is not numeric ({frame.iat[row, col]!r})")

    features = numeric.iloc[:, :-1].to_numpy(dtype=np.float64)
    raw_labels = numeric.iloc[:, -1].to_numpy(dtype=np.float64)
    for row, value in enumerate(raw_labels):
        if not np.isfinite(value) or value != np.floor(value) or value < 0:
            raise DatasetError(f"{path}: line {row + 2}: label {frame.iat[row, width - 1]!r} "
                               f"is not a class index")
    labels = raw_labels.astype(np.int64)
    if classes is None:
        classes = max(int(labels.max()) + 1 if labels.size else 2, 2)
    for row, label in enumerate(labels):
        if label >= classes:
            raise DatasetError(f"{path}: line {row + 2}: label {label} out of range [0, {classes})")
    for row, values in enumerate(features):
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise DatasetError(f"{path}: line {row + 2}: features must lie in [0, 1]")

    logger.debug(f"Loaded {len(labels)} samples from {path}")
    return Dataset(features, labels, split, classes)
