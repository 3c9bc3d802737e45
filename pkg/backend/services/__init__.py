"""
Spray Metrizer - Backend Services
=================================

Services:
    - Scenario Service: load, validate and sample scenario documents
    - Registry Service: built-in examples with known verdicts

Author: Alfred Munga
License: MIT
"""

from .registry_service import REGISTRY, get_example, list_examples
from .scenario_service import Scenario, load_scenario, sample_points, validate_scenario

__all__ = [
    'REGISTRY',
    'Scenario',
    'get_example',
    'list_examples',
    'load_scenario',
    'sample_points',
    'validate_scenario',
]
