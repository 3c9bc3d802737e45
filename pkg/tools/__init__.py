"""
Spray Metrizer Tools Package
============================

Computational modules: expressions, jets, spray geometry, metrizability
tests, Finsler reconstruction and projective deformations. Each module
also exposes a tool class with a run(input) -> dict contract.

Author: Alfred Munga
License: MIT
"""

from .expression_parser_tool import ExpressionParserTool
from .hilbert_tool import HilbertDeformationTool
from .metrizability_tool import MetrizabilityTool
from .reconstruction_tool import ReconstructionTool

__version__ = "0.1.0"
__author__ = "Alfred Munga"

__all__ = [
    "ExpressionParserTool",
    "HilbertDeformationTool",
    "MetrizabilityTool",
    "ReconstructionTool",
]
