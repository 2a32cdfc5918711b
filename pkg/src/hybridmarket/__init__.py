"""Hybrid futures/spot resource trading for edge-cloud markets."""

from .baselines import MECHANISMS, run_mechanism
from .futures import FuturesOutcome, run_oa_clm
from .metrics import MetricsReport, export_report, parse_report
from .model import (ConfigError, IngestionError, MarketParams, Scenario, ScenarioConfig,
                    build_scenario, generate_scenario, load_config)
from .spot import SpotOutcome, run_os_clm
from .transaction import execute_transaction, run_monte_carlo, sample_transaction
from .verification import AuditReport, audit

__all__ = [
    "MECHANISMS", "run_mechanism", "FuturesOutcome", "run_oa_clm", "MetricsReport", "export_report",
    "parse_report", "ConfigError", "IngestionError", "MarketParams", "Scenario", "ScenarioConfig",
    "build_scenario", "generate_scenario", "load_config", "SpotOutcome", "run_os_clm",
    "execute_transaction", "run_monte_carlo", "sample_transaction", "AuditReport", "audit",
]
