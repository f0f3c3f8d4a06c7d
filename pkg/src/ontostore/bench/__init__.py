"""Benchmark harness: dataset generator, scenario topologies, timing reports."""
from .generator import Dataset, ScaleConfig, generate_dataset
from .queries import benchmark_queries
from .report import compare_reports, format_report, parse_report, speedups
from .scenarios import SCENARIOS, Deployment, ManifestMismatch, TimingReport, deploy, expected_rows, run_query, run_scenario

__all__ = [
    "Dataset",
    "Deployment",
    "ManifestMismatch",
    "SCENARIOS",
    "ScaleConfig",
    "TimingReport",
    "benchmark_queries",
    "compare_reports",
    "deploy",
    "expected_rows",
    "format_report",
    "generate_dataset",
    "parse_report",
    "run_query",
    "run_scenario",
    "speedups",
]
