"""
Spray Metrizer Pipeline
=======================

Run orchestration and evaluation against expected closed forms.

Author: Alfred Munga
License: MIT
"""

from .evaluator import ComparisonResult, calculate_metrics, compare_to_expected
from .orchestrator import MetrizationPipeline, RunReport, grid_dump, run, run_example

__all__ = [
    "ComparisonResult",
    "MetrizationPipeline",
    "RunReport",
    "calculate_metrics",
    "compare_to_expected",
    "grid_dump",
    "run",
    "run_example",
]
