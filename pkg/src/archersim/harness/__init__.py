"""Experiment definitions, configuration, reports and the command line."""

from .config import (
    BUILTIN,
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    ExperimentConfig,
    OutputConfig,
    OverlayConfig,
    builtin_config,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .experiments import (
    DAY,
    Report,
    capacity_threshold,
    confinement_stats,
    overlay_stats,
    run_any,
    run_experiment,
    run_fig2,
    run_scenario1,
    serial_baseline,
    with_free_slots,
)
from .report import CDF, SUMMARY, TRACE, ReportError, emit_report, format_summary, load_summary, summary_json, sweep

__all__ = [
    "BUILTIN", "CDF", "ConfigError", "ConfigParseError", "ConfigValidationError", "DAY", "ExperimentConfig",
    "OutputConfig", "OverlayConfig", "Report", "ReportError", "SUMMARY", "TRACE", "builtin_config",
    "capacity_threshold", "config_from_dict", "config_to_dict", "confinement_stats", "emit_report",
    "format_summary", "load_config", "load_summary", "overlay_stats", "run_any", "run_experiment", "run_fig2",
    "run_scenario1", "serial_baseline", "summary_json", "sweep", "with_free_slots",
]
