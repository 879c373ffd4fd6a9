"""
Response Models

Pydantic models for benchmark results: error metrics, phase timings,
CSV result rows and the payloads returned by the HTTP service.
"""

import math
from datetime import datetime
from typing import List, Optional

from pydantic import BaseModel, Field, root_validator

from app.models.config import ExperimentConfig

# Column order of the results CSV
RESULT_COLUMNS = (
    "method", "m", "n", "sigma", "h", "seed",
    "mean_rel", "max_rel", "iterations", "converged",
    "phase1_ms", "phase2_ms",
)
TIMING_COLUMNS = ("phase1_ms", "phase2_ms")


class ErrorReport(BaseModel):
    """
    Relative errors of the discrete solution at interior nodes.

    Attributes:
        max_rel (float): max |u - u~| / |u|
        mean_rel (float): mean of |u - u~| / |u| over the interior count
        interior_count (int): interior nodes included
        excluded_count (int): interior nodes skipped because |u| vanished
    """

    max_rel: float = Field(..., description="Maximum relative error", example=2.1e-4)
    mean_rel: float = Field(..., description="Mean relative error", example=8.5e-5)
    interior_count: int = Field(..., ge=0, example=361)
    excluded_count: int = Field(0, ge=0)

    @root_validator(skip_on_failure=True)
    def validate_ordering(cls, values):
        max_rel, mean_rel = values["max_rel"], values["mean_rel"]
        if math.isfinite(max_rel) and math.isfinite(mean_rel):
            if mean_rel < 0.0 or max_rel < mean_rel * (1.0 - 1e-12):
                raise ValueError("expected max_rel >= mean_rel >= 0")
        return values


class TimingReport(BaseModel):
    """Median phase timings over exactly `repeats` timed runs (warm-up discarded)."""

    phase1_ms: float = Field(..., ge=0.0, description="Median weight computation time")
    phase2_ms: float = Field(..., ge=0.0, description="Median solve time")
    repeats: int = Field(..., ge=1)
    phase1_samples_ms: List[float] = Field(default_factory=list)
    phase2_samples_ms: List[float] = Field(default_factory=list)

    @root_validator(skip_on_failure=True)
    def validate_samples(cls, values):
        for key in ("phase1_samples_ms", "phase2_samples_ms"):
            samples = values.get(key)
            if samples and len(samples) != values["repeats"]:
                raise ValueError(f"{key} must hold exactly `repeats` samples")
        return values


class SolveSummary(BaseModel):
    """Solver outcome without the solution vector."""

    iterations: int = Field(..., ge=0)
    final_residual: float
    converged: bool


class ResultRow(BaseModel):
    """One row of the results CSV."""

    method: str
    m: int
    n: int
    sigma: float
    h: float
    seed: int
    mean_rel: float
    max_rel: float
    iterations: int
    converged: bool
    phase1_ms: float
    phase2_ms: float


class ConvergenceRow(BaseModel):
    """Errors for one refinement level and the observed order against the previous level."""

    method: str
    m: int
    sigma: float
    h: float
    nodes: int
    mean_rel: float
    max_rel: float
    order_max: float = Field(float("nan"))
    order_mean: float = Field(float("nan"))
    converged: bool


class ExperimentResponse(BaseModel):
    """Result of a single experiment run."""

    config: ExperimentConfig
    node_count: int
    errors: ErrorReport
    timing: TimingReport
    solve: SolveSummary
    timestamp: datetime = Field(default_factory=datetime.now)


class SweepResponse(BaseModel):
    """Rows of a sigma sweep, as written to the results CSV."""

    rows: List[ResultRow]
    failed: int = Field(0, ge=0, description="Rows that did not converge")


class ErrorResponse(BaseModel):
    """
    Model for error responses.

    Attributes:
        error (bool): Always True for error responses
        message (str): Human-readable error message
        status_code (int): HTTP status code
        details (Optional[str]): Additional error details
    """

    error: bool = Field(default=True, description="Indicates this is an error response")
    message: str = Field(..., description="Human-readable error message", example="Validation error")
    status_code: int = Field(..., description="HTTP status code", example=422)
    details: Optional[str] = Field(None, description="Additional error details")


class HealthResponse(BaseModel):
    """Health check payload."""

    status: str = Field(..., example="healthy")
    message: str = Field(..., example="Meshless benchmark service is running")
    version: str = Field(..., example="1.0.0")
    timestamp: datetime = Field(default_factory=datetime.now)
