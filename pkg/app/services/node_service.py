"""
Node Service

Scattered node generation for the unit square and nearest-neighbour
stencil queries. This module handles:
- Uniform boundary discretization and advancing-front interior fill
- Uniform tensor-grid node sets (reference layouts)
- Exact k-nearest-neighbour stencils with index tie-breaking
- Node set CSV snapshots
"""

import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from app.services.errors import ParameterError

logger = logging.getLogger(__name__)

# Advancing-front fill parameters
FILL_CANDIDATES = 12
REJECTION_FACTOR = 0.9
DOMAIN_CENTER = (0.5, 0.5)

PathLike = Union[str, Path]


class NodeSet:
    """
    Immutable discretization of the unit square.

    Attributes:
        points (np.ndarray): (N, 2) node coordinates, row order = node index
        boundary_mask (np.ndarray): (N,) True for nodes on the boundary
        h (float): target fill distance the set was generated with
        seed (int): RNG seed the set was generated with
    """

    def __init__(
        self,
        points: Union[np.ndarray, Sequence[Sequence[float]]],
        boundary_mask: Optional[Union[np.ndarray, Sequence[bool]]] = None,
        h: float = 0.0,
        seed: int = 0,
    ):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ParameterError("Node coordinates must be finite")

        if boundary_mask is None:
            mask = np.zeros(len(pts), dtype=bool)
        else:
            mask = np.array(boundary_mask, dtype=bool).reshape(-1)
            if mask.shape[0] != pts.shape[0]:
                raise ParameterError(
                    "Boundary mask length does not match node count",
                    {"nodes": pts.shape[0], "mask": mask.shape[0]},
                )

        pts.setflags(write=False)
        mask.setflags(write=False)
        self.points = pts
        self.boundary_mask = mask
        self.h = float(h)
        self.seed = int(seed)
        self.tree = cKDTree(pts) if len(pts) else None
        self.interior_indices = np.flatnonzero(~mask)
        self.boundary_indices = np.flatnonzero(mask)
        self.interior_indices.setflags(write=False)
        self.boundary_indices.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return (
            f"NodeSet(N={self.size}, interior={len(self.interior_indices)}, "
            f"h={self.h}, seed={self.seed})"
        )

    def min_spacing(self) -> float:
        """Minimum pairwise distance between nodes (inf for fewer than 2 nodes)."""
        if self.size < 2:
            return math.inf
        distances, _ = self.tree.query(self.points, k=2)
        return float(distances[:, 1].min())


@dataclass(frozen=True)
class Stencil:
    """
    Ordered support of a node: the center first, then neighbours by
    ascending distance (ties by ascending index).
    """

    center: int
    neighbors: np.ndarray

    def __len__(self) -> int:
        return int(self.neighbors.shape[0])


# -------------------------
# Node generation
# -------------------------
def _boundary_divisions(h: float) -> int:
    """Number of boundary segments per edge, so that h' = 1 / k <= h."""
    return max(1, int(math.ceil(1.0 / h - 1e-9)))


def _validate_spacing(h: float) -> None:
    if not math.isfinite(h) or h <= 0.0 or h > 0.5:
        raise ParameterError("Fill distance must satisfy 0 < h <= 0.5", {"h": h})


def _boundary_points(h: float) -> List[Tuple[float, float]]:
    """Uniform boundary walk, counter-clockwise from (0, 0); corners appear once."""
    k = _boundary_divisions(h)
    points: List[Tuple[float, float]] = []
    points.extend((i / k, 0.0) for i in range(k))
    points.extend((1.0, i / k) for i in range(k))
    points.extend(((k - i) / k, 1.0) for i in range(k))
    points.extend((0.0, (k - i) / k) for i in range(k))
    return points


class _SpatialHash:
    """Bucket grid used by the fill to test the rejection radius exactly."""

    def __init__(self, cell: float):
        self.cell = cell
        self.buckets: Dict[Tuple[int, int], List[int]] = defaultdict(list)
        self.coords: List[Tuple[float, float]] = []

    def _key(self, x: float, y: float) -> Tuple[int, int]:
        return int(math.floor(x / self.cell)), int(math.floor(y / self.cell))

    def insert(self, x: float, y: float) -> int:
        index = len(self.coords)
        self.coords.append((x, y))
        self.buckets[self._key(x, y)].append(index)
        return index

    def is_free(self, x: float, y: float, radius: float) -> bool:
        r2 = radius * radius
        kx, ky = self._key(x, y)
        for bx in (kx - 1, kx, kx + 1):
            for by in (ky - 1, ky, ky + 1):
                for index in self.buckets.get((bx, by), ()):
                    ox, oy = self.coords[index]
                    dx = ox - x
                    dy = oy - y
                    if dx * dx + dy * dy < r2:
                        return False
        return True


def _advance_front(
    grid: _SpatialHash,
    queue: deque,
    rng: np.random.Generator,
    h: float,
    r_min: float,
) -> None:
    """Expand the FIFO front until no active node can place a candidate."""
    step = 2.0 * math.pi / FILL_CANDIDATES
    while queue:
        px, py = grid.coords[queue.popleft()]
        base = float(rng.uniform(0.0, 2.0 * math.pi))
        for j in range(FILL_CANDIDATES):
            theta = base + j * step
            cx = px + h * math.cos(theta)
            cy = py + h * math.sin(theta)
            if not (0.0 < cx < 1.0 and 0.0 < cy < 1.0):
                continue
            if grid.is_free(cx, cy, r_min):
                queue.append(grid.insert(cx, cy))


def generate_nodes(h: float, seed: int) -> NodeSet:
    """
    Discretize the unit square: uniform boundary with step 1/ceil(1/h) and an
    advancing-front interior fill with fill distance h.

    Args:
        h (float): target fill distance, 0 < h <= 0.5
        seed (int): seed of the random candidate angles

    Returns:
        NodeSet: boundary nodes first (counter-clockwise from the origin),
        interior nodes in acceptance order

    Raises:
        ParameterError: if h is out of range
    """
    _validate_spacing(h)
    r_min = REJECTION_FACTOR * h
    rng = np.random.default_rng(seed)
    grid = _SpatialHash(r_min)

    boundary = _boundary_points(h)
    for x, y in boundary:
        grid.insert(x, y)

    queue = deque(range(len(boundary)))
    _advance_front(grid, queue, rng, h, r_min)

    if len(grid.coords) == len(boundary) and grid.is_free(*DOMAIN_CENTER, r_min):
        queue.append(grid.insert(*DOMAIN_CENTER))
        _advance_front(grid, queue, rng, h, r_min)

    mask = np.zeros(len(grid.coords), dtype=bool)
    mask[: len(boundary)] = True
    nodes = NodeSet(np.array(grid.coords), mask, h=h, seed=seed)
    logger.info(
        f"Generated {nodes.size} nodes ({len(nodes.interior_indices)} interior) "
        f"for h={h}, seed={seed}"
    )
    return nodes


def uniform_grid_nodes(h: float) -> NodeSet:
    """Tensor grid with step 1/ceil(1/h), row-major (y outer, x inner)."""
    _validate_spacing(h)
    k = _boundary_divisions(h)
    ticks = np.arange(k + 1) / k
    xx, yy = np.meshgrid(ticks, ticks)
    points = np.column_stack([xx.ravel(), yy.ravel()])
    on_edge = (xx == 0.0) | (xx == 1.0) | (yy == 0.0) | (yy == 1.0)
    return NodeSet(points, on_edge.ravel(), h=1.0 / k, seed=0)


# -------------------------
# Nearest-neighbour queries
# -------------------------
def _as_position(pos: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    p = np.asarray(pos, dtype=float).reshape(-1)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise ParameterError("Query position must be a finite 2D point", {"pos": pos})
    return p


def _nearest(nodes: NodeSet, pos: np.ndarray, n: int) -> np.ndarray:
    """n nearest node indices to pos by distance, ties by ascending index."""
    if n < 1 or n > nodes.size:
        raise ParameterError(
            "Stencil size must satisfy 1 <= n <= N", {"n": n, "N": nodes.size}
        )
    distances, _ = nodes.tree.query(pos, k=n)
    radius = float(np.max(distances))
    candidates = np.array(
        nodes.tree.query_ball_point(pos, r=radius * (1.0 + 1e-9) + 1e-300),
        dtype=np.int64,
    )
    exact = np.sqrt(((nodes.points[candidates] - pos) ** 2).sum(axis=1))
    order = np.lexsort((candidates, exact))
    return candidates[order[:n]]


def knn_stencil(nodes: NodeSet, center: int, n: int) -> Stencil:
    """
    Stencil of the n nearest nodes to a node, the node itself first.

    Raises:
        ParameterError: if n > N or the center index is invalid
    """
    if not 0 <= center < nodes.size:
        raise ParameterError("Stencil center out of range", {"center": center})
    nearest = _nearest(nodes, nodes.points[center], n)
    if nearest[0] != center:
        rest = nearest[nearest != center][: n - 1]
        nearest = np.concatenate(([center], rest)).astype(np.int64)
    return Stencil(center=int(center), neighbors=nearest)


def query_virtual(
    nodes: NodeSet, pos: Union[np.ndarray, Sequence[float]], n: int
) -> np.ndarray:
    """n nearest node indices to an arbitrary (possibly exterior) position."""
    return _nearest(nodes, _as_position(pos), n)


# -------------------------
# CSV snapshots
# -------------------------
def _nodes_frame(nodes: NodeSet) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "x": nodes.points[:, 0],
            "y": nodes.points[:, 1],
            "boundary": nodes.boundary_mask.astype(int),
        }
    )


def nodes_to_csv(nodes: NodeSet) -> str:
    """The `x,y,boundary` CSV as text."""
    return _nodes_frame(nodes).to_csv(index=False, float_format="%.17g")


def save_nodes_csv(nodes: NodeSet, path: PathLike) -> Path:
    """Write the node set as `x,y,boundary` rows in node index order."""
    target = Path(path)
    _nodes_frame(nodes).to_csv(target, index=False, float_format="%.17g")
    logger.info(f"Node snapshot written to {target} ({nodes.size} rows)")
    return target


def load_nodes_csv(path: PathLike, h: float = 0.0, seed: int = 0) -> NodeSet:
    """Read a node set written by save_nodes_csv."""
    frame = pd.read_csv(Path(path), float_precision="round_trip")
    missing = {"x", "y", "boundary"} - set(frame.columns)
    if missing:
        raise ParameterError("Node CSV is missing columns", {"missing": sorted(missing)})
    points = frame[["x", "y"]].to_numpy(dtype=float)
    mask = frame["boundary"].to_numpy(dtype=int) != 0
    return NodeSet(points, mask, h=h, seed=seed)
