"""
Request Models

Pydantic models validating incoming benchmark requests.
"""

from typing import List, Optional

from pydantic import BaseModel, Field, validator

from app.models.config import ExperimentConfig, Method


class SweepRequest(BaseModel):
    """
    Sigma sweep over one or more methods and augmentation degrees.

    Attributes:
        base (ExperimentConfig): shared settings (h, seed, solver, repeats...)
        sigmas (Optional[List[float]]): sigma values; 40 log-spaced values in [1e-2, 1e1] when omitted
        methods (List[Method]): methods to sweep; defaults to the base method
        degrees (List[int]): augmentation degrees; defaults to the base degree
    """

    base: ExperimentConfig = Field(default_factory=ExperimentConfig)
    sigmas: Optional[List[float]] = Field(None, min_items=1, max_items=400)
    methods: List[Method] = Field(default_factory=list)
    degrees: List[int] = Field(default_factory=list)

    @validator("sigmas")
    def validate_sigmas(cls, v):
        if v is not None and any(not s > 0.0 for s in v):
            raise ValueError("All sigma values must be positive")
        return v

    @validator("degrees", each_item=True)
    def validate_degrees(cls, v):
        if v < 0:
            raise ValueError("Augmentation degree must be non-negative")
        return v

    class Config:
        """Pydantic configuration."""
        schema_extra = {
            "example": {
                "base": {"h": 0.05, "seed": 1, "m": 2, "repeats": 1},
                "sigmas": [0.5, 1.0, 2.0],
                "methods": ["rbf_fd", "hybrid5"],
                "degrees": [2],
            }
        }
