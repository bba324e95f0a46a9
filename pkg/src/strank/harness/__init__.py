from .config import ExperimentConfig, load_config, parse_config
from .experiments import (
    PRESETS,
    Cell,
    Preset,
    reproduce_table1,
    run_cell,
    run_cells,
    run_experiment,
    sweep_downsample,
    sweep_nk,
    sweep_params,
)

__all__ = [
    "PRESETS",
    "Cell",
    "ExperimentConfig",
    "Preset",
    "load_config",
    "parse_config",
    "reproduce_table1",
    "run_cell",
    "run_cells",
    "run_experiment",
    "sweep_downsample",
    "sweep_nk",
    "sweep_params",
]
