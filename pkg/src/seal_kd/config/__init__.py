"""Run configuration for seal-kd commands."""

from .config_manager import ConfigError, ConfigManager, RunConfig
from .validator import ConfigValidator

__all__ = ['ConfigManager', 'RunConfig', 'ConfigError', 'ConfigValidator']
