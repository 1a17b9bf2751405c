"""Output helpers shared by every command.

All text outputs are UTF-8 with LF line endings. Floats are rendered with 17
significant digits so they read back bit-identically.
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def format_float(value: float) -> str:
    """Render a finite float with 17 significant digits, always as a JSON number."""
    if not math.isfinite(value):
        raise ValueError(f"Cannot serialize non-finite value {value!r}")
    text = format(value, ".17g")
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def _encode(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"Unsupported type for serialization: {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Serialize to compact single-line JSON with sorted keys."""
    return _encode(obj)


def write_json(path: PathLike, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(obj) + "\n")


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(dumps(record) + "\n")


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {number} is not valid JSON: {e}") from e
    return records


class OutputTransaction:
    """Collects the files a command writes and commits them together.

    ``path_for`` hands out a temporary sibling for each target. ``commit``
    renames every temporary into place; if the block raises, every temporary
    and every already committed target is removed.
    """

    def __init__(self, directory: PathLike):
        self.directory = Path(directory)
        self._pending: Dict[Path, Path] = {}
        self._committed: List[Path] = []

    def path_for(self, name: str) -> Path:
        target = self.directory / name
        temp = target.with_name(f".{target.name}.partial")
        self._pending[target] = temp
        return temp

    def commit(self) -> List[Path]:
        for target, temp in self._pending.items():
            if not temp.exists():
                raise FileNotFoundError(f"Output was never written: {target}")
        for target, temp in self._pending.items():
            os.replace(temp, target)
            self._committed.append(target)
        written = list(self._committed)
        self._pending.clear()
        return written

    def rollback(self) -> None:
        for target, temp in self._pending.items():
            if temp.exists():
                temp.unlink()
        for target in self._committed:
            if target.exists():
                target.unlink()
        if self._pending or self._committed:
            logger.warning(f"Removed partial outputs in {self.directory}")
        self._pending.clear()
        self._committed.clear()

    def __enter__(self) -> "OutputTransaction":
        self.directory.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb) -> Optional[bool]:
        if exc_type is not None:
            self.rollback()
            return None
        try:
            self.commit()
        except Exception:
            self.rollback()
            raise
        return None
