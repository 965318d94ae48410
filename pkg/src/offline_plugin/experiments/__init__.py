"""Config-driven Monte Carlo sweeps."""

from .config import ConfigError, InstanceConfig, PolicyConfig, SweepConfig, load_config, parse_config
from .sweep import (
    SweepResult,
    fit_scaling_exponent,
    horizon_sweep,
    lower_bound_experiment,
    run_sweep,
)
