"""Experiment runners, NaN monitoring, gradient checks, guideline audit and reporting."""

from .audit import AuditFinding, audit_config
from .gradcheck import GradCheckResult, run_gradient_check
from .monitor import NanEvent, scan
from .report import SimReport, TableReport, TraceRecord, emit_report, read_manifest
from .runners import (
    ConfigError,
    SqrtDivergenceConfig,
    SweepConfig,
    VarianceNanConfig,
    run_eps_sweep,
    run_gradscale_sweep,
    run_sqrt_divergence,
    run_sweep,
    run_variance_nan_table,
)

__all__ = [
    "AuditFinding",
    "audit_config",
    "GradCheckResult",
    "run_gradient_check",
    "NanEvent",
    "scan",
    "SimReport",
    "TableReport",
    "TraceRecord",
    "emit_report",
    "read_manifest",
    "ConfigError",
    "SqrtDivergenceConfig",
    "SweepConfig",
    "VarianceNanConfig",
    "run_eps_sweep",
    "run_gradscale_sweep",
    "run_sqrt_divergence",
    "run_sweep",
    "run_variance_nan_table",
]
