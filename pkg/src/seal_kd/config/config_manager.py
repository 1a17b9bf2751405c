"""Run configuration: one file drives every command."""

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from ..core.data import SyntheticSpec
from ..core.energy import EnergyModel
from ..core.losses import DistillConfig
from ..core.snn import LIFParams, NetSpec
from ..core.training import TrainPlan
from ..utils.io_utils import dumps

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """The configuration file is unreadable or contains invalid entries."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class DataConfig:
    """Dataset source."""
    source: str = "synthetic"
    classes: int = 5
    dim: int = 16
    samples_per_class: int = 100
    test_samples_per_class: int = 50
    spread: float = 0.15
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None
    directory: Optional[str] = None


@dataclass
class NetworkConfig:
    """Spiking student architecture."""
    hidden: List[int] = field(default_factory=lambda: [32])
    timesteps: int = 4
    leak_alpha: float = 0.5
    v_threshold: float = 1.0
    surrogate_width: float = 1.0
    encoding: str = "constant-current"
    init_gain: float = 2.0


@dataclass
class TeacherConfig:
    """MLP teacher and its optimizer."""
    hidden: List[int] = field(default_factory=lambda: [64])
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    cosine: bool = True


@dataclass
class PlanConfig:
    """Student optimizer."""
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    cosine: bool = True
    checkpoint_every: int = 0


@dataclass
class DistillSection:
    """Objective selection and its temperatures and weights."""
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


@dataclass
class DiagnosticsConfig:
    """Sample count, split and heatmap sample (-1 disables the heatmap)."""
    samples: int = 5
    split: str = "test"
    heatmap_sample: int = 0
    all_timesteps: bool = False


@dataclass
class EnergySection:
    """Energy per operation (pJ) and the split that is traced."""
    e_ac: float = 0.9
    e_mac: float = 4.6
    split: str = "test"


@dataclass
class OutputConfig:
    directory: str = "runs/default"


SECTIONS = {
    "data": DataConfig,
    "network": NetworkConfig,
    "teacher": TeacherConfig,
    "plan": PlanConfig,
    "distill": DistillSection,
    "diagnostics": DiagnosticsConfig,
    "energy": EnergySection,
    "output": OutputConfig,
}


@dataclass
class RunConfig:
    """Complete run configuration."""
    seed: int
    data: DataConfig = field(default_factory=DataConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    distill: DistillSection = field(default_factory=DistillSection)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    energy: EnergySection = field(default_factory=EnergySection)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def output_dir(self) -> Path:
        return Path(self.output.directory)

    @property
    def data_dir(self) -> Path:
        return Path(self.data.directory) if self.data.directory else self.output_dir

    def synthetic_spec(self) -> SyntheticSpec:
        d = self.data
        return SyntheticSpec(classes=d.classes, dim=d.dim, samples_per_class=d.samples_per_class,
                             test_samples_per_class=d.test_samples_per_class, spread=d.spread, seed=self.seed)

    def net_spec(self) -> NetSpec:
        n = self.network
        lif = LIFParams(leak_alpha=n.leak_alpha, v_threshold=n.v_threshold, surrogate_width=n.surrogate_width)
        return NetSpec(hidden=tuple(n.hidden), timesteps=n.timesteps, lif=lif,
                       encoding=n.encoding, init_gain=n.init_gain)

    def teacher_plan(self) -> TrainPlan:
        t = self.teacher
        return TrainPlan(epochs=t.epochs, batch_size=t.batch_size, learning_rate=t.learning_rate,
                         momentum=t.momentum, weight_decay=t.weight_decay, cosine=t.cosine, seed=self.seed)

    def student_plan(self) -> TrainPlan:
        p = self.plan
        return TrainPlan(epochs=p.epochs, batch_size=p.batch_size, learning_rate=p.learning_rate,
                         momentum=p.momentum, weight_decay=p.weight_decay, cosine=p.cosine,
                         seed=self.seed, checkpoint_every=p.checkpoint_every)

    def distill_config(self) -> DistillConfig:
        return DistillConfig(**{f.name: getattr(self.distill, f.name) for f in fields(DistillSection)})

    def energy_model(self) -> EnergyModel:
        return EnergyModel(e_ac=self.energy.e_ac, e_mac=self.energy.e_mac)


def _type_ok(value: Any, default: Any, annotation: Any) -> bool:
    if value is None:
        return "Optional" in str(annotation)
    if isinstance(default, bool) or annotation is bool:
        return isinstance(value, bool)
    if isinstance(default, int) or annotation is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float) or "float" in str(annotation):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list) or "List" in str(annotation):
        return isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    if isinstance(default, str) or "str" in str(annotation):
        return isinstance(value, str)
    return True


def describe_config_keys() -> List[str]:
    """One line per section listing every key with its default."""
    lines = ["seed (required int)"]
    for name, section in SECTIONS.items():
        defaults = section()
        keys = ", ".join(f"{f.name}={getattr(defaults, f.name)!r}" for f in fields(section))
        lines.append(f"{name}: {keys}")
    return lines


class ConfigManager:
    """Loads, overrides and saves run configurations (JSON or YAML)."""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self._config: Optional[RunConfig] = None

    def load_config(self, config_path: Optional[str] = None) -> RunConfig:
        path = config_path or self.config_path
        if not path:
            raise ValueError("No configuration path provided")
        if not os.path.exists(path):
            raise FileNotFoundError(f"Configuration file not found: {path}")

        with open(path, "r", encoding="utf-8") as f:
            try:
                if str(path).endswith((".yaml", ".yml")):
                    data = yaml.safe_load(f)
                else:
                    data = json.load(f)
            except (json.JSONDecodeError, yaml.YAMLError) as e:
                raise ConfigError([f"{path}: cannot parse configuration: {e}"]) from e

        self._config = self._parse_config(data)
        logger.debug(f"Loaded configuration from {path}")
        return self._config

    def _parse_config(self, data: Any) -> RunConfig:
        """Map raw data onto RunConfig, collecting every problem before failing."""
        if not isinstance(data, dict):
            raise ConfigError(["configuration must be a mapping at the top level"])
        problems = []
        for key in data:
            if key != "seed" and key not in SECTIONS:
                problems.append(f"unknown top-level key '{key}'")

        seed = data.get("seed")
        if seed is None:
            problems.append("'seed' is required")
        elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            problems.append(f"'seed' must be a non-negative integer, got {seed!r}")

        sections = {}
        for name, section_cls in SECTIONS.items():
            raw = data.get(name, {})
            if raw is None:
                raw = {}
            if not isinstance(raw, dict):
                problems.append(f"section '{name}' must be a mapping")
                continue
            sections[name], section_problems = self._parse_section(name, section_cls, raw)
            problems.extend(section_problems)

        if problems:
            raise ConfigError(problems)
        return RunConfig(seed=seed, **sections)

    def _parse_section(self, name: str, section_cls, raw: Dict[str, Any]) -> Tuple[Any, List[str]]:
        section = section_cls()
        known = {f.name: f for f in fields(section_cls)}
        problems = []
        for key, value in raw.items():
            if key not in known:
                problems.append(f"unknown key '{name}.{key}'")
                continue
            default = getattr(section, key)
            if not _type_ok(value, default, known[key].type):
                problems.append(f"'{name}.{key}' has invalid type {type(value).__name__}")
                continue
            if isinstance(default, float) and isinstance(value, int):
                value = float(value)
            setattr(section, key, value)
        return section, problems

    def apply_overrides(self, config: RunConfig, seed: Optional[int] = None, method: Optional[str] = None,
                        ela_variant: Optional[str] = None, sta_variant: Optional[str] = None,
                        out: Optional[str] = None) -> RunConfig:
        """Command-line flags take precedence over the file."""
        if seed is not None:
            config = replace(config, seed=seed)
        distill = config.distill
        if method is not None:
            distill = replace(distill, method=method)
        if ela_variant is not None:
            distill = replace(distill, ela_variant=ela_variant)
        if sta_variant is not None:
            distill = replace(distill, sta_variant=sta_variant)
        config = replace(config, distill=distill)
        if out is not None:
            config = replace(config, output=replace(config.output, directory=out))
        self._config = config
        return config

    def save_config(self, config: RunConfig, output_path: str) -> None:
        """Write the effective configuration; YAML for .yaml/.yml paths, JSON otherwise."""
        data = self._config_to_dict(config)
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            if str(output_path).endswith((".yaml", ".yml")):
                yaml.dump(data, f, default_flow_style=False, allow_unicode=True, sort_keys=True)
            else:
                f.write(dumps(data) + "\n")
        logger.info(f"Configuration saved to {output_path}")

    def _config_to_dict(self, config: RunConfig) -> Dict[str, Any]:
        data: Dict[str, Any] = {"seed": config.seed}
        for name in SECTIONS:
            section = getattr(config, name)
            data[name] = {f.name: getattr(section, f.name) for f in fields(section)}
        return data

    @property
    def config(self) -> Optional[RunConfig]:
        return self._config
