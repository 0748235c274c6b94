"""Configuration, file formats, metrics, the payload benchmark and the CLI."""

from .benchmark import (
    BENCHMARK_COLUMNS,
    CONTROLLERS,
    BenchmarkSummary,
    PayloadRun,
    derived_seed,
    run_benchmark,
    run_metrics,
    summarize,
)
from .config import SCHEMA, ConfigError, RunConfig, default_config, load_config, parse_config
from .io import FormatError, read_csv, read_dataset, read_log, write_csv, write_dataset, write_log
from .metrics import MetricsReport, compute_metrics, improvement
