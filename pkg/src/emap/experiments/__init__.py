from .config import SYNTHETIC_TABLE, ConfigError, ExperimentConfig, table_config
from .harness import (
    RunFailure,
    RunResult,
    TrialRecord,
    discriminator_rates,
    read_trials_csv,
    run_bottleneck_comparison,
    run_discriminator_test,
    run_experiment,
    run_explainer_eval,
    run_gh_validation,
    summarize,
    write_outputs,
)

__all__ = [
    "SYNTHETIC_TABLE",
    "ConfigError",
    "ExperimentConfig",
    "RunFailure",
    "RunResult",
    "TrialRecord",
    "discriminator_rates",
    "read_trials_csv",
    "run_bottleneck_comparison",
    "run_discriminator_test",
    "run_experiment",
    "run_explainer_eval",
    "run_gh_validation",
    "summarize",
    "table_config",
    "write_outputs",
]
