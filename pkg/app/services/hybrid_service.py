"""
Hybrid RBF/FD Service

Places a classical finite-difference Laplacian stencil (five- or nine-point)
with spacing delta = sigma * h around each node, interpolates the scattered
values to the off-node stencil positions with identity-operator RBF-FD, and
composes the two into one sparse row:

    w_j = sum_i a_i * w_ij

Two variants:
- shared: all virtual positions are interpolated from the center's stencil,
  reusing its single LU factorization
- per_virtual_node: every virtual position gets the stencil of its own n
  nearest nodes and a freshly factorized system
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.models.config import RbfConfig
from app.services.errors import ConditioningError, ParameterError
from app.services.node_service import NodeSet, Stencil, knn_stencil, query_virtual
from app.services.rbf_fd_service import (
    IDENTITY,
    map_rows,
    rbf_fd_weights,
    stencil_table,
)
from app.services.rbf_service import LocalSystem, build_local_system

logger = logging.getLogger(__name__)


class StencilKind(str, Enum):
    FIVE_POINT = "five_point"
    NINE_POINT = "nine_point"


class HybridVariant(str, Enum):
    SHARED_STENCIL = "shared_stencil"
    PER_VIRTUAL_NODE = "per_virtual_node"


# Offsets in units of delta and weights scaled by delta^2
_UNIT_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (0, 0), (1, 0), (-1, 0), (0, 1), (0, -1),
    (2, 0), (-2, 0), (0, 2), (0, -2),
)
_SCALED_WEIGHTS: Dict[StencilKind, Tuple[Fraction, ...]] = {
    StencilKind.FIVE_POINT: (
        Fraction(-4), Fraction(1), Fraction(1), Fraction(1), Fraction(1),
    ),
    StencilKind.NINE_POINT: (
        Fraction(-5),
        Fraction(4, 3), Fraction(4, 3), Fraction(4, 3), Fraction(4, 3),
        Fraction(-1, 12), Fraction(-1, 12), Fraction(-1, 12), Fraction(-1, 12),
    ),
}


@dataclass(frozen=True)
class VirtualStencil:
    """
    Finite-difference Laplacian stencil at spacing delta = sigma * h.

    Attributes:
        kind (StencilKind): five- or nine-point
        offsets (np.ndarray): (k, 2) displacements, zero offset first
        fd_weights (np.ndarray): (k,) weights a_i
        scaled_weights (tuple): exact delta^2 * a_i
        delta (float): stencil spacing
        sigma (float): spacing relative to the fill distance
    """

    kind: StencilKind
    offsets: np.ndarray
    fd_weights: np.ndarray
    scaled_weights: Tuple[Fraction, ...]
    delta: float
    sigma: float

    @property
    def point_count(self) -> int:
        return len(self.scaled_weights)


@dataclass(frozen=True)
class HybridWeights:
    """Combined hybrid row; neighbor_indices sorted for the per-virtual-node variant."""

    center: int
    neighbor_indices: np.ndarray
    weights: np.ndarray
    variant: HybridVariant

    def apply(self, u: np.ndarray) -> float:
        return float(self.weights @ np.asarray(u, dtype=float)[self.neighbor_indices])


def make_virtual_stencil(kind: StencilKind, sigma: float, h: float) -> VirtualStencil:
    """
    Virtual five-/nine-point Laplacian stencil with spacing delta = sigma * h.

    Raises:
        ParameterError: if sigma or h is not positive
    """
    if not sigma > 0.0 or not h > 0.0 or not np.isfinite(sigma * h):
        raise ParameterError(
            "Virtual stencil needs positive sigma and h", {"sigma": sigma, "h": h}
        )
    kind = StencilKind(kind)
    scaled = _SCALED_WEIGHTS[kind]
    delta = sigma * h
    offsets = delta * np.array(_UNIT_OFFSETS[: len(scaled)], dtype=float)
    weights = np.array([float(a) for a in scaled]) / delta ** 2
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return VirtualStencil(kind, offsets, weights, scaled, delta, sigma)


def _identity_rows(
    system: LocalSystem, vs: VirtualStencil, position: np.ndarray
) -> List[np.ndarray]:
    """Identity-operator rows w_i. for every offset; Kronecker row for the zero offset."""
    rows: List[np.ndarray] = []
    for offset in vs.offsets:
        if not offset.any():
            kronecker = np.zeros(system.n)
            kronecker[0] = 1.0
            rows.append(kronecker)
        else:
            rows.append(rbf_fd_weights(system, IDENTITY, position + offset).weights)
    return rows


def compose_rows(fd_weights: np.ndarray, rows: Sequence[np.ndarray]) -> np.ndarray:
    """Combined row sum_i a_i * rows[i], accumulated in offset order."""
    combined = np.zeros_like(rows[0])
    for a, row in zip(fd_weights, rows):
        combined += a * row
    return combined


def hybrid_weights_shared(
    nodes: NodeSet,
    cfg: RbfConfig,
    vs: VirtualStencil,
    center: int,
    stencil: Optional[Stencil] = None,
) -> HybridWeights:
    """
    Hybrid row of an interior node using one stencil and one LU factorization
    for all virtual positions.

    Raises:
        ParameterError: if the center is a boundary node
        ConditioningError: if the center's local system is singular
    """
    if nodes.boundary_mask[center]:
        raise ParameterError("Hybrid rows are defined for interior nodes only", {"center": center})
    if stencil is None:
        stencil = knn_stencil(nodes, center, cfg.stencil_size)
    system = build_local_system(nodes, stencil, cfg)
    rows = _identity_rows(system, vs, nodes.points[center])
    return HybridWeights(
        center=int(center),
        neighbor_indices=stencil.neighbors,
        weights=compose_rows(vs.fd_weights, rows),
        variant=HybridVariant.SHARED_STENCIL,
    )


def hybrid_weights_alternative(
    nodes: NodeSet,
    cfg: RbfConfig,
    vs: VirtualStencil,
    center: int,
) -> HybridWeights:
    """
    Hybrid row of an interior node where each virtual position is
    interpolated from its own n nearest nodes. The per-offset rows are merged
    over the union of involved indices.

    Raises:
        ParameterError: if the center is a boundary node
        ConditioningError: with the center and offset position of the failing system
    """
    if nodes.boundary_mask[center]:
        raise ParameterError("Hybrid rows are defined for interior nodes only", {"center": center})
    n = cfg.stencil_size
    origin = nodes.points[center]
    merged: Dict[int, float] = {}

    for position, (offset, a) in enumerate(zip(vs.offsets, vs.fd_weights)):
        if not offset.any():
            merged[int(center)] = merged.get(int(center), 0.0) + a
            continue
        virtual = origin + offset
        nearest = query_virtual(nodes, virtual, n)
        support = Stencil(center=int(nearest[0]), neighbors=nearest)
        try:
            system = build_local_system(nodes, support, cfg)
        except ConditioningError as e:
            raise ConditioningError(
                f"Virtual node interpolation failed: {e.message}",
                center=int(center),
                offset=position,
            ) from e
        row = rbf_fd_weights(system, IDENTITY, virtual)
        for index, w in zip(row.neighbor_indices, row.weights):
            merged[int(index)] = merged.get(int(index), 0.0) + a * w

    indices = np.array(sorted(merged), dtype=np.int64)
    weights = np.array([merged[i] for i in indices])
    return HybridWeights(
        center=int(center),
        neighbor_indices=indices,
        weights=weights,
        variant=HybridVariant.PER_VIRTUAL_NODE,
    )


def assemble_all_hybrid(
    nodes: NodeSet,
    cfg: RbfConfig,
    vs: VirtualStencil,
    variant: HybridVariant,
    stencils: Optional[Sequence[Stencil]] = None,
    workers: int = 1,
) -> List[HybridWeights]:
    """One hybrid row per interior node, in interior index order."""
    variant = HybridVariant(variant)
    interior = nodes.interior_indices

    if variant is HybridVariant.PER_VIRTUAL_NODE:
        def compute(slot: int) -> HybridWeights:
            return hybrid_weights_alternative(nodes, cfg, vs, int(interior[slot]))
    else:
        if stencils is None:
            stencils = stencil_table(nodes, cfg.stencil_size)
        if len(stencils) != len(interior):
            raise ParameterError(
                "Stencil table must hold one stencil per interior node",
                {"stencils": len(stencils), "interior": len(interior)},
            )

        def compute(slot: int) -> HybridWeights:
            return hybrid_weights_shared(
                nodes, cfg, vs, int(interior[slot]), stencil=stencils[slot]
            )

    return map_rows(compute, len(interior), workers)
