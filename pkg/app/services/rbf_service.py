"""
RBF Service

Polyharmonic-spline (PHS) kernels, the bivariate monomial basis and the
local augmented interpolation system

    [[A, P], [P^T, 0]] [alpha; beta] = [f; 0]

assembled in shifted/scaled stencil coordinates and factorized once with
LU (partial pivoting) so that every later solve costs two substitutions.
"""

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.spatial.distance import cdist

from app.models.config import RbfConfig
from app.services.errors import ConditioningError, ParameterError
from app.services.node_service import NodeSet, Stencil

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray, Sequence[float]]

# Relative pivot size below which a local system counts as singular
PIVOT_RTOL = np.finfo(float).eps


def _check_order(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ParameterError("PHS order must be an odd positive integer", {"k": k})


def _radii(r: ArrayLike) -> np.ndarray:
    radii = np.asarray(r, dtype=float)
    if np.any(radii < 0.0):
        raise ParameterError("PHS radius must be non-negative")
    return radii


def phs_eval(k: int, r: ArrayLike) -> Union[float, np.ndarray]:
    """phi(r) = r^k for an odd order k."""
    _check_order(k)
    radii = _radii(r)
    values = np.power(radii, k)
    return float(values) if values.ndim == 0 else values


def phs_laplacian(k: int, r: ArrayLike) -> Union[float, np.ndarray]:
    """2D Laplacian of the radial function r^k, i.e. k^2 r^(k-2)."""
    _check_order(k)
    if k < 3:
        raise ParameterError("PHS Laplacian is singular at the origin for k < 3", {"k": k})
    radii = _radii(r)
    values = (k * k) * np.power(radii, k - 2)
    return float(values) if values.ndim == 0 else values


@lru_cache(maxsize=None)
def monomial_exponents(m: int) -> Tuple[Tuple[int, int], ...]:
    """Exponents (a, b) of x^a y^b with a + b <= m in graded lexicographic order."""
    if m < 0:
        raise ParameterError("Monomial degree must be non-negative", {"m": m})
    return tuple((d - j, j) for d in range(m + 1) for j in range(d + 1))


def _as_points(p: ArrayLike) -> Tuple[np.ndarray, bool]:
    points = np.asarray(p, dtype=float)
    single = points.ndim == 1
    return points.reshape(-1, 2), single


def monomial_basis(m: int, p: ArrayLike) -> np.ndarray:
    """Values of all monomials up to degree m at one point (s,) or many (K, s)."""
    points, single = _as_points(p)
    exps = np.array(monomial_exponents(m), dtype=int)
    x = points[:, 0:1]
    y = points[:, 1:2]
    values = np.power(x, exps[:, 0]) * np.power(y, exps[:, 1])
    return values[0] if single else values


def monomial_laplacian(m: int, p: ArrayLike) -> np.ndarray:
    """Laplacians of all monomials up to degree m, ordered as monomial_basis."""
    points, single = _as_points(p)
    exps = np.array(monomial_exponents(m), dtype=int)
    a = exps[:, 0]
    b = exps[:, 1]
    x = points[:, 0:1]
    y = points[:, 1:2]
    d2x = (a * (a - 1)) * np.power(x, np.maximum(a - 2, 0)) * np.power(y, b)
    d2y = (b * (b - 1)) * np.power(x, a) * np.power(y, np.maximum(b - 2, 0))
    values = d2x + d2y
    return values[0] if single else values


@dataclass(frozen=True)
class InterpolantCoeffs:
    """RBF coefficients alpha (n,) and monomial coefficients beta (s,)."""

    alpha: np.ndarray
    beta: np.ndarray


class LocalSystem:
    """
    Factorized saddle-point system of one stencil.

    Attributes:
        stencil (Stencil): support the system was built on
        config (RbfConfig): kernel order and augmentation degree
        points (np.ndarray): (n, 2) stencil nodes in local coordinates
        shift (np.ndarray): translation (the stencil center)
        scale (float): stencil radius used to normalize coordinates
        matrix (np.ndarray): (M, M) assembled system
        lu, piv: LU factorization with partial pivoting of `matrix`
    """

    __slots__ = ("stencil", "config", "points", "shift", "scale", "matrix", "lu", "piv")

    def __init__(
        self,
        stencil: Stencil,
        config: RbfConfig,
        points: np.ndarray,
        shift: np.ndarray,
        scale: float,
        matrix: np.ndarray,
        lu: np.ndarray,
        piv: np.ndarray,
    ):
        for array in (points, shift, matrix, lu, piv):
            array.setflags(write=False)
        self.stencil = stencil
        self.config = config
        self.points = points
        self.shift = shift
        self.scale = scale
        self.matrix = matrix
        self.lu = lu
        self.piv = piv

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def to_local(self, at: ArrayLike) -> np.ndarray:
        return (np.asarray(at, dtype=float) - self.shift) / self.scale

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Forward/backward substitution with the stored factorization."""
        return lu_solve((self.lu, self.piv), rhs, check_finite=False)


def build_local_system(nodes: NodeSet, stencil: Stencil, cfg: RbfConfig) -> LocalSystem:
    """
    Assemble and LU-factorize the augmented interpolation matrix of a stencil.

    Coordinates are translated by the stencil center and divided by the
    largest center-to-neighbour distance before assembly.

    Raises:
        ParameterError: if the stencil size differs from cfg.stencil_size
        ConditioningError: if the matrix is singular to working precision
    """
    n = cfg.stencil_size
    if len(stencil) != n:
        raise ParameterError(
            "Stencil size does not match configuration",
            {"center": stencil.center, "expected": n, "actual": len(stencil)},
        )

    shift = nodes.points[stencil.center].copy()
    offsets = nodes.points[stencil.neighbors] - shift
    scale = float(np.sqrt((offsets ** 2).sum(axis=1)).max())
    if scale == 0.0:
        scale = 1.0
    local = offsets / scale

    kernel = phs_eval(cfg.phs_order, cdist(local, local))
    kernel = np.triu(kernel, 1)
    kernel = kernel + kernel.T
    poly = monomial_basis(cfg.aug_degree, local)

    size = cfg.system_size
    matrix = np.zeros((size, size))
    matrix[:n, :n] = kernel
    matrix[:n, n:] = poly
    matrix[n:, :n] = poly.T

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(matrix, check_finite=False)

    pivots = np.abs(np.diag(lu))
    if not np.all(np.isfinite(lu)) or pivots.min() <= PIVOT_RTOL * pivots.max():
        raise ConditioningError(
            "Local interpolation matrix is singular to working precision",
            center=stencil.center,
        )

    return LocalSystem(stencil, cfg, local, shift, scale, matrix, lu, piv)


def interpolate(sys: LocalSystem, values: ArrayLike) -> InterpolantCoeffs:
    """Solve for the interpolant coefficients of nodal data on the stencil."""
    data = np.asarray(values, dtype=float).reshape(-1)
    if data.shape[0] != sys.n:
        raise ParameterError(
            "Interpolation data length must equal the stencil size",
            {"expected": sys.n, "actual": data.shape[0]},
        )
    rhs = np.concatenate([data, np.zeros(sys.config.monomial_count)])
    solution = sys.solve(rhs)
    return InterpolantCoeffs(alpha=solution[: sys.n], beta=solution[sys.n:])


def eval_interpolant(
    sys: LocalSystem, coeffs: InterpolantCoeffs, at: ArrayLike
) -> Union[float, np.ndarray]:
    """Evaluate sum(alpha_i phi(|x - x_i|)) + sum(beta_j p_j(x)) at one or many points."""
    local, single = _as_points(sys.to_local(at))
    kernel = phs_eval(sys.config.phs_order, cdist(local, sys.points))
    poly = monomial_basis(sys.config.aug_degree, local)
    values = kernel @ coeffs.alpha + poly @ coeffs.beta
    return float(values[0]) if single else values
