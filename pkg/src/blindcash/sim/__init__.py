"""Deterministic in-process deployment, scenarios, adversaries, benchmarks,
and the CLI."""

from .harness import MetricsReport, ScenarioConfig, run

__all__ = ["MetricsReport", "ScenarioConfig", "run"]
