from sddp.evaluation.config import ExperimentConfig, PanelSource, config_from_dict, load_config
from sddp.evaluation.experiment import ExperimentReport, percentile_interval, run_experiment
from sddp.evaluation.metrics import (
    ErrorTable,
    MetricPair,
    NormalizedTable,
    cumulative_normalized_error,
    metrics,
    minmax_normalize,
    normalize_table,
)

__all__ = [
    "ErrorTable",
    "ExperimentConfig",
    "ExperimentReport",
    "MetricPair",
    "NormalizedTable",
    "PanelSource",
    "config_from_dict",
    "cumulative_normalized_error",
    "load_config",
    "metrics",
    "minmax_normalize",
    "normalize_table",
    "percentile_interval",
    "run_experiment",
]
