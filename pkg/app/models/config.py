"""
Configuration Models

Pydantic models for the numerical configuration of the toolkit:
local RBF systems, the global iterative solver and benchmark experiments.
Experiment configurations can be loaded from key-value files.
"""

import logging
from enum import Enum
from math import comb
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, Field, root_validator, validator

logger = logging.getLogger(__name__)


def monomial_count(m: int) -> int:
    """Number of bivariate monomials of total degree <= m."""
    return comb(m + 2, 2)


class RbfConfig(BaseModel):
    """
    Local polyharmonic-spline interpolation setup.

    Attributes:
        phs_order (int): odd PHS exponent k, phi(r) = r^k
        aug_degree (int): monomial augmentation degree m
        support_size (Optional[int]): stencil size override; 2 * s when unset
    """

    phs_order: int = Field(3, ge=1, description="Odd polyharmonic spline order k")
    aug_degree: int = Field(2, ge=0, description="Monomial augmentation degree m")
    support_size: Optional[int] = Field(
        None, ge=1, description="Stencil size override (defaults to twice the monomial count)"
    )

    @validator("phs_order")
    def validate_phs_order(cls, v):
        if v % 2 == 0:
            raise ValueError("phs_order must be odd")
        return v

    @root_validator(skip_on_failure=True)
    def validate_support(cls, values):
        support = values.get("support_size")
        if support is not None and support < monomial_count(values["aug_degree"]):
            raise ValueError("support_size must be at least the monomial count")
        return values

    @property
    def monomial_count(self) -> int:
        return monomial_count(self.aug_degree)

    @property
    def stencil_size(self) -> int:
        if self.support_size is not None:
            return self.support_size
        return 2 * self.monomial_count

    @property
    def system_size(self) -> int:
        return self.stencil_size + self.monomial_count

    class Config:
        """Pydantic configuration."""
        allow_mutation = False
        frozen = True


class IlutSettings(BaseModel):
    """Incomplete LU with threshold dropping."""

    fill_factor: float = Field(10.0, gt=0.0)
    drop_tol: float = Field(1e-5, ge=0.0)

    class Config:
        """Pydantic configuration."""
        allow_mutation = False


class SolverSettings(BaseModel):
    """BiCGSTAB stopping rule; max_iter defaults to 10 * N at solve time."""

    tol: float = Field(1e-12, gt=0.0)
    max_iter: Optional[int] = Field(None, ge=1)
    ilut: IlutSettings = Field(default_factory=IlutSettings)

    class Config:
        """Pydantic configuration."""
        allow_mutation = False


class Method(str, Enum):
    """Operator discretization compared by the benchmark."""

    RBF_FD = "rbf_fd"
    HYBRID5 = "hybrid5"
    HYBRID9 = "hybrid9"
    HYBRID5_ALT = "hybrid5_alt"
    HYBRID9_ALT = "hybrid9_alt"

    @property
    def is_hybrid(self) -> bool:
        return self is not Method.RBF_FD

    @property
    def point_count(self) -> Optional[int]:
        if self in (Method.HYBRID5, Method.HYBRID5_ALT):
            return 5
        if self in (Method.HYBRID9, Method.HYBRID9_ALT):
            return 9
        return None

    @property
    def is_alternative(self) -> bool:
        return self in (Method.HYBRID5_ALT, Method.HYBRID9_ALT)


class NodeLayout(str, Enum):
    """How the unit square is discretized."""

    SCATTERED = "scattered"
    GRID = "grid"


class ExperimentConfig(BaseModel):
    """
    One benchmark configuration. The stencil size is always derived from
    the augmentation degree as 2 * binomial(m + 2, 2).
    """

    h: float = Field(0.05, gt=0.0, le=0.5, description="Fill distance")
    seed: int = Field(1, ge=0, description="Node generation seed")
    method: Method = Field(Method.RBF_FD)
    m: int = Field(2, ge=0, description="Monomial augmentation degree")
    sigma: float = Field(1.0, gt=0.0, description="Virtual stencil scale, delta = sigma * h")
    layout: NodeLayout = Field(NodeLayout.SCATTERED)
    phs_order: int = Field(3, ge=1)
    tol: float = Field(1e-12, gt=0.0)
    max_iter: Optional[int] = Field(None, ge=1)
    fill_factor: float = Field(10.0, gt=0.0)
    drop_tol: float = Field(1e-5, ge=0.0)
    repeats: int = Field(25, ge=1, description="Timed runs per phase")
    workers: int = Field(1, ge=1, description="Threads for weight computation")

    @validator("phs_order")
    def validate_phs_order(cls, v):
        if v % 2 == 0:
            raise ValueError("phs_order must be odd")
        return v

    @property
    def stencil_size(self) -> int:
        return 2 * monomial_count(self.m)

    def rbf_config(self) -> RbfConfig:
        return RbfConfig(phs_order=self.phs_order, aug_degree=self.m)

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            tol=self.tol,
            max_iter=self.max_iter,
            ilut=IlutSettings(fill_factor=self.fill_factor, drop_tol=self.drop_tol),
        )

    class Config:
        """Pydantic configuration."""
        allow_mutation = False
        extra = "forbid"
        schema_extra = {
            "example": {
                "h": 0.05,
                "seed": 1,
                "method": "hybrid5",
                "m": 2,
                "sigma": 1.0,
                "repeats": 3,
            }
        }


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a key-value file (KEY=value per line); keys are lower-cased."""
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"Config file not found: {source}")
    values = dotenv_values(source)
    parsed = {key.strip().lower(): value for key, value in values.items() if value is not None}
    logger.info(f"📁 Loaded {len(parsed)} config values from {source}")
    return parsed


def load_experiment_config(
    path: Optional[Union[str, Path]] = None, **overrides: Any
) -> ExperimentConfig:
    """
    Build an ExperimentConfig from defaults, an optional config file and
    explicit overrides (None-valued overrides are ignored).
    """
    merged: Dict[str, Any] = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig(**merged)
