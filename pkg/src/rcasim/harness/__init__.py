"""Scenario construction, baselines, sweeps and the ``rca-sim`` command line."""

from .config import SystemConfig, dump_config, load_config
from .experiments import SWEEPS, ExperimentOutput, rerun_from_manifest, run_experiment
from .schemes import (ACTIVE, FIXED, FLEXIBLE, RCA, SCHEMES, ExperimentResult, SchemeRun, baseline_active_array,
                      baseline_fixed_rotation, baseline_flexible_position, build_scenario, generate_channel,
                      run_scheme)

__all__ = [
    "ACTIVE", "FIXED", "FLEXIBLE", "RCA", "SCHEMES", "SWEEPS",
    "ExperimentOutput", "ExperimentResult", "SchemeRun", "SystemConfig",
    "baseline_active_array", "baseline_fixed_rotation", "baseline_flexible_position", "build_scenario",
    "dump_config", "generate_channel", "load_config", "rerun_from_manifest", "run_experiment", "run_scheme",
]
