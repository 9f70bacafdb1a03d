"""Key-rate simulator for continuous-variable quantum secret sharing over
turbulent free-space links under transmittance attacks."""

__version__ = "0.1.0"

from .config import (AttackSpec, ChannelGeometry, ConfigError, ProtocolConfig, RunConfig,
                     SimulationOptions, default_config, validate)
from .qss import QssReport, QssScenario, optimize_modulation, run, sweep

__all__ = [
    "AttackSpec", "ChannelGeometry", "ConfigError", "ProtocolConfig", "RunConfig",
    "SimulationOptions", "QssReport", "QssScenario", "default_config", "optimize_modulation",
    "run", "sweep", "validate", "__version__",
]
