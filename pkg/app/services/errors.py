"""
Meshless Toolkit Errors

Exception hierarchy shared by the numerical services, the benchmark
driver, the command line and the HTTP routes.
"""

from typing import Any, Dict, Optional


class MeshlessError(Exception):
    """Base class for every error raised by the toolkit."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ParameterError(MeshlessError, ValueError):
    """Invalid argument: out-of-range h, sigma, stencil size, radius..."""
    pass


class ConditioningError(MeshlessError):
    """Local interpolation system is singular to working precision."""

    def __init__(
        self,
        message: str,
        center: Optional[int] = None,
        offset: Optional[int] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        ctx = dict(context or {})
        if center is not None:
            ctx["center"] = center
        if offset is not None:
            ctx["offset"] = offset
        super().__init__(message, ctx)
        self.center = center
        self.offset = offset


class AssemblyError(MeshlessError):
    """Global system could not be assembled from the operator rows."""
    pass


class SolverError(MeshlessError):
    """Breakdown or failure of a global linear solver."""
    pass
