"""
RBF-FD Service

Weights w such that (L u)(x) ~ sum_i w_i u(x_i) over a stencil, obtained by
solving the factorized local system with the operator applied to the basis
as right-hand side. Supports the Laplacian and the identity operator (the
latter is the interpolation step of the hybrid method).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, TypeVar, Union

import numpy as np
from scipy.spatial.distance import cdist

from app.models.config import RbfConfig
from app.services.errors import ConditioningError, ParameterError
from app.services.node_service import NodeSet, Stencil, knn_stencil
from app.services.rbf_service import (
    LocalSystem,
    build_local_system,
    monomial_basis,
    monomial_laplacian,
    phs_eval,
    phs_laplacian,
)

logger = logging.getLogger(__name__)

Row = TypeVar("Row")


class OperatorTag(str, Enum):
    LAPLACIAN = "laplacian"
    IDENTITY = "identity"


@dataclass(frozen=True)
class Operator:
    """
    Linear operator applied to the RBF and monomial basis.

    Attributes:
        tag (OperatorTag): operator name
        rbf_action: (k, r) -> values of the operator applied to phi at radii r
        monomial_action: (m, point) -> operator applied to each monomial
        scale_power (int): derivative order; local weights are divided by scale**scale_power
    """

    tag: OperatorTag
    rbf_action: Callable[[int, np.ndarray], np.ndarray]
    monomial_action: Callable[[int, np.ndarray], np.ndarray]
    scale_power: int


LAPLACIAN = Operator(OperatorTag.LAPLACIAN, phs_laplacian, monomial_laplacian, 2)
IDENTITY = Operator(OperatorTag.IDENTITY, phs_eval, monomial_basis, 0)


@dataclass(frozen=True)
class OperatorWeights:
    """One sparse row of a discretized operator."""

    center: int
    neighbor_indices: np.ndarray
    weights: np.ndarray

    def apply(self, u: np.ndarray) -> float:
        """Evaluate the row on nodal values u (indexed by node)."""
        return float(self.weights @ np.asarray(u, dtype=float)[self.neighbor_indices])


def rbf_fd_weights(
    sys: LocalSystem, op: Operator, at: Union[np.ndarray, Sequence[float]]
) -> OperatorWeights:
    """
    Weights of operator `op` evaluated at `at` over the stencil of `sys`.

    The right-hand side [(L phi_i)(at); (L p_j)(at)] is built in local
    coordinates, solved with the stored LU factorization and rescaled to
    physical coordinates; the monomial (Lagrange multiplier) entries are dropped.
    """
    point = np.asarray(at, dtype=float).reshape(-1)
    if point.shape != (2,) or not np.all(np.isfinite(point)):
        raise ParameterError("Evaluation point must be a finite 2D point", {"at": at})

    local = sys.to_local(point)
    radii = cdist(local[None, :], sys.points)[0]
    rhs = np.concatenate(
        [
            op.rbf_action(sys.config.phs_order, radii),
            op.monomial_action(sys.config.aug_degree, local),
        ]
    )
    solution = sys.solve(rhs)
    weights = solution[: sys.n]
    if op.scale_power:
        weights = weights / sys.scale ** op.scale_power
    return OperatorWeights(
        center=sys.stencil.center,
        neighbor_indices=sys.stencil.neighbors,
        weights=weights,
    )


def stencil_table(nodes: NodeSet, n: int) -> List[Stencil]:
    """knn stencils of every interior node, in interior index order."""
    return [knn_stencil(nodes, int(center), n) for center in nodes.interior_indices]


def map_rows(
    compute: Callable[[int], Row], count: int, workers: int = 1
) -> List[Row]:
    """
    Evaluate compute(slot) for slot in range(count) into disjoint slots.
    The result does not depend on the number of workers.
    """
    rows: List[Optional[Row]] = [None] * count
    if workers <= 1 or count < 2:
        for slot in range(count):
            rows[slot] = compute(slot)
        return rows  # type: ignore[return-value]

    def fill(slot: int) -> None:
        rows[slot] = compute(slot)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        # list() re-raises the first failing slot
        list(pool.map(fill, range(count)))
    return rows  # type: ignore[return-value]


def assemble_all_weights(
    nodes: NodeSet,
    cfg: RbfConfig,
    op: Operator,
    stencils: Optional[Sequence[Stencil]] = None,
    workers: int = 1,
) -> List[OperatorWeights]:
    """
    Operator rows for every interior node; boundary nodes get none.

    Raises:
        ConditioningError: for the first stencil whose system is singular
    """
    interior = nodes.interior_indices
    if stencils is None:
        stencils = stencil_table(nodes, cfg.stencil_size)
    if len(stencils) != len(interior):
        raise ParameterError(
            "Stencil table must hold one stencil per interior node",
            {"stencils": len(stencils), "interior": len(interior)},
        )

    def compute(slot: int) -> OperatorWeights:
        stencil = stencils[slot]
        try:
            system = build_local_system(nodes, stencil, cfg)
        except ConditioningError as e:
            raise ConditioningError(
                f"RBF-FD weights failed: {e.message}", center=stencil.center
            ) from e
        return rbf_fd_weights(system, op, nodes.points[stencil.center])

    return map_rows(compute, len(interior), workers)
