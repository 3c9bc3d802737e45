"""
Spray Metrizer - Error Types
============================

Exception hierarchy shared by the computational tools, the services and the
CLI. The CLI maps these onto exit codes (input errors -> 2, numeric or
domain failures -> 3).

Author: Alfred Munga
License: MIT
"""

from typing import Optional, Sequence, Tuple


class MetrizerError(Exception):
    """Base class for every error raised by the toolkit."""


# ============================================================================
# Input errors
# ============================================================================

class ExpressionSyntaxError(MetrizerError, SyntaxError):
    """
    Malformed coefficient expression.

    Attributes:
        position: 0-based character offset where parsing stopped
        expected: Human readable description of the expected token
    """

    def __init__(self, message: str, position: int, expected: str = ""):
        self.position = position
        self.expected = expected
        detail = f"{message} at offset {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class VariableIndexError(MetrizerError, IndexError):
    """Coordinate variable index outside [1, n]."""


class SchemaError(MetrizerError):
    """
    Scenario document failed validation.

    Attributes:
        field_path: Dotted path of the first offending field (e.g. "n", "G", "domain.x_box")
    """

    def __init__(self, field_path: str, message: str = ""):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if message else field_path)


# ============================================================================
# Numeric errors
# ============================================================================

class DomainError(MetrizerError, ArithmeticError):
    """
    Evaluation left the domain of an elementary function.

    Attributes:
        indices: Batch positions that failed (empty for unbatched evaluation)
    """

    def __init__(self, message: str, indices: Sequence[int] = ()):
        self.indices: Tuple[int, ...] = tuple(int(i) for i in indices)
        super().__init__(message)


class PathDomainError(DomainError):
    """A quadrature node left the admitted region."""


class OrderError(MetrizerError):
    """Requested derivative exceeds the truncation order of a jet."""


class ToleranceError(MetrizerError):
    """Adaptive refinement exhausted its budget before meeting the tolerance."""


class SamplingExhausted(MetrizerError):
    """Rejection sampling accepted too few draws."""


class RicciDegenerateError(MetrizerError):
    """
    Ricci scalar below the admissible threshold at a point.

    Attributes:
        rho: Ricci scalar at the offending point
        scale: Isotropy scale the threshold was measured against
    """

    def __init__(self, rho: float, scale: float, point: Optional[object] = None):
        self.rho = rho
        self.scale = scale
        self.point = point
        super().__init__(f"Ricci scalar {rho:.3e} below threshold (scale {scale:.3e})")
