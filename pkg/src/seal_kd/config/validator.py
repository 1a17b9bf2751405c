"""Semantic validation of run configurations."""

import logging
from typing import List

from ..core.losses import ELA_VARIANTS, METHODS, STA_VARIANTS
from ..core.snn import ENCODINGS
from .config_manager import RunConfig

logger = logging.getLogger(__name__)

DATA_SOURCES = ("synthetic", "csv")
SECTIONS = ("data", "network", "teacher", "plan", "distill", "diagnostics", "energy", "output")
GENERAL = "run"


def section_of(finding: str) -> str:
    """Config section a finding names through its leading ``section.key``."""
    head = finding.split(".", 1)[0]
    return head if head in SECTIONS else GENERAL


class ConfigValidator:
    """Validates run configurations."""

    def __init__(self):
        self.errors: List[str] = []
        self.warnings: List[str] = []
        self._checked = "run config"

    def validate(self, config: RunConfig) -> bool:
        """Validate complete configuration. Returns True if valid."""
        self.errors = []
        self.warnings = []
        self._checked = (f"run config (seed {config.seed}, {config.distill.method} student, "
                         f"T={config.network.timesteps})")

        self._validate_data_config(config)
        self._validate_network_config(config)
        self._validate_optimizer_config("teacher", config.teacher)
        self._validate_optimizer_config("plan", config.plan)
        self._validate_distill_config(config)
        self._validate_diagnostics_config(config)
        self._validate_energy_config(config)

        if self.errors:
            logger.error(f"{self._checked}: {len(self.errors)} errors")
            for error in self.errors:
                logger.error(f"  [{section_of(error)}] {error}")

        if self.warnings:
            logger.warning(f"{self._checked}: {len(self.warnings)} warnings")
            for warning in self.warnings:
                logger.warning(f"  [{section_of(warning)}] {warning}")

        return len(self.errors) == 0

    def _validate_data_config(self, config: RunConfig):
        data = config.data
        if data.source not in DATA_SOURCES:
            self.errors.append(f"data.source must be one of {DATA_SOURCES}")
            return
        if data.source == "csv":
            if not data.train_csv or not data.test_csv:
                self.errors.append("data.train_csv and data.test_csv are required for csv source")
            return
        if data.classes < 2:
            self.errors.append("data.classes must be at least 2")
        if data.dim < 1:
            self.errors.append("data.dim must be positive")
        if data.samples_per_class < 1 or data.test_samples_per_class < 1:
            self.errors.append("data.samples_per_class and data.test_samples_per_class must be positive")
        if not data.spread > 0:
            self.errors.append("data.spread must be positive")
        elif data.spread > 0.5:
            self.warnings.append("data.spread > 0.5 makes the clusters heavily overlap")

    def _validate_network_config(self, config: RunConfig):
        network = config.network
        if not network.hidden or any(h < 1 for h in network.hidden):
            self.errors.append("network.hidden must list positive layer widths")
        if network.timesteps < 1:
            self.errors.append("network.timesteps must be at least 1")
        if not 0.0 < network.leak_alpha < 1.0:
            self.errors.append("network.leak_alpha must lie in (0, 1)")
        if network.v_threshold <= 0:
            self.errors.append("network.v_threshold must be positive")
        if network.surrogate_width <= 0:
            self.errors.append("network.surrogate_width must be positive")
        if network.encoding not in ENCODINGS:
            self.errors.append(f"network.encoding must be one of {ENCODINGS}")
        if network.init_gain <= 0:
            self.errors.append("network.init_gain must be positive")

    def _validate_optimizer_config(self, name: str, section):
        if section.epochs < 0:
            self.errors.append(f"{name}.epochs cannot be negative")
        elif section.epochs == 0:
            self.warnings.append(f"{name}.epochs = 0 leaves the network at its initialization")
        if section.batch_size < 1:
            self.errors.append(f"{name}.batch_size must be positive")
        if not section.learning_rate > 0:
            self.errors.append(f"{name}.learning_rate must be positive")
        elif section.learning_rate > 1.0:
            self.warnings.append(f"{name}.learning_rate > 1 is likely to diverge")
        if not 0.0 <= section.momentum < 1.0:
            self.errors.append(f"{name}.momentum must lie in [0, 1)")
        if section.weight_decay < 0:
            self.errors.append(f"{name}.weight_decay cannot be negative")
        if getattr(section, "checkpoint_every", 0) < 0:
            self.errors.append(f"{name}.checkpoint_every cannot be negative")

    def _validate_distill_config(self, config: RunConfig):
        distill = config.distill
        if distill.method not in METHODS:
            self.errors.append(f"distill.method must be one of {METHODS}")
        if distill.ela_variant not in ELA_VARIANTS:
            self.errors.append(f"distill.ela_variant must be one of {ELA_VARIANTS}")
        if distill.sta_variant not in STA_VARIANTS:
            self.errors.append(f"distill.sta_variant must be one of {STA_VARIANTS}")
        for key in ("temperature", "cls_temperature", "sta_temperature"):
            if getattr(distill, key) <= 0:
                self.errors.append(f"distill.{key} must be positive")
        if distill.ela_temperature is not None and distill.ela_temperature <= 0:
            self.errors.append("distill.ela_temperature must be positive")
        for key in ("lambda_kd", "alpha_ela", "beta_sta"):
            if getattr(distill, key) < 0:
                self.errors.append(f"distill.{key} cannot be negative")
        if distill.method in ("sta", "uta", "seal") and config.network.timesteps < 2:
            self.errors.append(f"distill.method '{distill.method}' needs network.timesteps >= 2")

    def _validate_diagnostics_config(self, config: RunConfig):
        diagnostics = config.diagnostics
        if diagnostics.samples < 1:
            self.errors.append("diagnostics.samples must be positive")
        if diagnostics.split not in ("train", "test"):
            self.errors.append("diagnostics.split must be 'train' or 'test'")
        if diagnostics.heatmap_sample < -1:
            self.errors.append("diagnostics.heatmap_sample must be -1 (disabled) or a sample index")

    def _validate_energy_config(self, config: RunConfig):
        energy = config.energy
        if energy.e_ac <= 0 or energy.e_mac <= 0:
            self.errors.append("energy.e_ac and energy.e_mac must be positive")
        if energy.split not in ("train", "test"):
            self.errors.append("energy.split must be 'train' or 'test'")
        if config.network.encoding != "constant-current":
            self.warnings.append("network.encoding rate-poisson: energy accounting counts the input layer as MACs, "
                                 "which is an upper bound for binary input")

    def get_validation_report(self) -> str:
        """Findings grouped by config section; the verdict line comes last."""
        report = []
        for marker, kind, findings in (("❌", "error", self.errors), ("⚠️ ", "warning", self.warnings)):
            if not findings:
                continue
            report.append(f"{marker} {len(findings)} {kind}{'' if len(findings) == 1 else 's'}:")
            for section in SECTIONS + (GENERAL,):
                keyed = [f for f in findings if section_of(f) == section]
                if keyed:
                    report.append(f"  [{section}]")
                    report.extend(f"    • {finding}" for finding in keyed)

        if self.errors:
            report.append(f"❌ {self._checked} cannot run until the errors above are fixed")
        else:
            report.append(f"✅ {self._checked} is valid")
        return "\n".join(report)
