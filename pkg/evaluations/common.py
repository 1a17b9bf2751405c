#!/usr/bin/env python3
"""
Shared setup for the desk-scale reproductions: reference task, teacher, students
"""

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Optional

from seal_kd.config import ConfigManager, RunConfig
from seal_kd.core.data import Dataset, gen_synthetic
from seal_kd.core.losses import DistillConfig, TeacherLogits
from seal_kd.core.teacher import train_teacher
from seal_kd.core.training import TrainingResult, train_student
from seal_kd.utils.io_utils import write_json

REFERENCE_CONFIG = "configs/examples/reference_task.json"
RESULTS_DIR = Path("evaluations/results")
SEEDS = (0, 1, 2, 3, 4)


@dataclass
class PreparedTask:
    """One seed of the reference task with its trained teacher."""
    config: RunConfig
    train: Dataset
    test: Dataset
    teacher_train: TeacherLogits
    teacher_test: TeacherLogits


def load_reference(config_path: str = REFERENCE_CONFIG, **overrides) -> RunConfig:
    manager = ConfigManager(config_path)
    return manager.apply_overrides(manager.load_config(), **overrides)


def prepare_task(seed: int, config_path: str = REFERENCE_CONFIG, epochs: Optional[int] = None) -> PreparedTask:
    config = load_reference(config_path, seed=seed)
    if epochs is not None:
        config = replace(config, plan=replace(config.plan, epochs=epochs))
    train, test = gen_synthetic(config.synthetic_spec())
    net, teacher_train = train_teacher(train, config.teacher_plan(), config.teacher.hidden)
    teacher_test = TeacherLogits.from_array(net.logits(test.features))
    print(f"   🎓 seed {seed}: teacher trained ({train.size} train / {test.size} test samples)")
    return PreparedTask(config, train, test, teacher_train, teacher_test)


def train_method(task: PreparedTask, distill: DistillConfig) -> TrainingResult:
    teacher = task.teacher_train if distill.uses_teacher else None
    return train_student(task.train, teacher, task.config.net_spec(), task.config.student_plan(), distill,
                         eval_dataset=task.test)


def final_accuracy(result: TrainingResult) -> Optional[float]:
    return result.metrics[-1]["test_aggregated_accuracy"] if result.metrics else None


def save_results(name: str, payload: Dict) -> Path:
    RESULTS_DIR.mkdir(parents=True, exist_ok=True)
    path = RESULTS_DIR / f"{name}_{int(time.time())}.json"
    write_json(path, payload)
    print(f"\n💾 Results saved: {path}")
    return path


def held_in(flags, required: int = 4) -> str:
    hits = sum(bool(f) for f in flags)
    return f"{hits}/{len(flags)} seeds {'✅' if hits >= required else '❌'}"
