"""
PDE Solver Service

Global sparse system for the Dirichlet Poisson problem and its solution:
- CSR assembly from per-node operator rows plus identity boundary rows
- Right-preconditioned BiCGSTAB with an ILUT preconditioner
- Dense LU oracle for small systems
- Matrix Market export
"""

import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.io
import scipy.sparse as sp
from pydantic import BaseModel, Field
from scipy.linalg import LinAlgError, LinAlgWarning, solve
from scipy.sparse.linalg import spilu

from app.models.config import IlutSettings, SolverSettings
from app.services.errors import AssemblyError, ParameterError, SolverError
from app.services.node_service import NodeSet

logger = logging.getLogger(__name__)

DENSE_SIZE_LIMIT = 4000
BREAKDOWN_TOL = 1e-300
# relative deviation of M⁻¹A·1 from 1 above which ILUT is rejected
PRECONDITIONER_DEVIATION_LIMIT = 1e3

SourceFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SparseSystem:
    """CSR matrix (sorted columns, no stored zeros) and right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])


class SolveReport(BaseModel):
    """
    Outcome of an iterative solve.

    Attributes:
        solution (np.ndarray): approximate nodal values
        iterations (int): BiCGSTAB iterations performed
        final_residual (float): true relative residual ||b - Ax|| / ||b||
        converged (bool): final_residual <= tolerance
    """

    solution: np.ndarray
    iterations: int = Field(..., ge=0)
    final_residual: float
    converged: bool

    class Config:
        """Pydantic configuration."""
        arbitrary_types_allowed = True
        json_encoders = {np.ndarray: lambda a: a.tolist()}


def assemble_system(
    nodes: NodeSet, rows: Sequence, f: SourceFunction
) -> SparseSystem:
    """
    Assemble the N x N system: interior row i holds that node's operator
    row with rhs f(x_i); boundary row i is e_i with rhs 0.

    Args:
        nodes (NodeSet): discretization
        rows: objects with `center`, `neighbor_indices` and `weights`
        f: vectorized source term, (K, 2) points -> (K,) values

    Raises:
        AssemblyError: for missing, duplicate, boundary or out-of-range rows
    """
    size = nodes.size
    interior = set(int(i) for i in nodes.interior_indices)
    seen = set()

    row_ids = []
    col_ids = []
    values = []
    for row in rows:
        center = int(row.center)
        if center not in interior:
            raise AssemblyError("Operator row for a non-interior node", {"center": center})
        if center in seen:
            raise AssemblyError("Duplicate operator row", {"center": center})
        seen.add(center)
        cols = np.asarray(row.neighbor_indices, dtype=np.int64)
        if cols.size and (cols.min() < 0 or cols.max() >= size):
            raise AssemblyError("Operator row references an invalid node", {"center": center})
        row_ids.append(np.full(cols.size, center, dtype=np.int64))
        col_ids.append(cols)
        values.append(np.asarray(row.weights, dtype=float))

    missing = interior - seen
    if missing:
        raise AssemblyError(
            "Missing operator rows", {"count": len(missing), "first": min(missing)}
        )

    boundary = nodes.boundary_indices.astype(np.int64)
    row_ids.append(boundary)
    col_ids.append(boundary)
    values.append(np.ones(boundary.size))

    matrix = sp.csr_matrix(
        (np.concatenate(values), (np.concatenate(row_ids), np.concatenate(col_ids))),
        shape=(size, size),
    )
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    matrix.sort_indices()

    rhs = np.zeros(size)
    if len(nodes.interior_indices):
        rhs[nodes.interior_indices] = f(nodes.points[nodes.interior_indices])
    return SparseSystem(matrix=matrix, rhs=rhs)


def relative_residual(system: SparseSystem, x: np.ndarray) -> float:
    """True relative residual ||b - Ax||_2 / ||b||_2 (absolute when b = 0)."""
    norm_b = np.linalg.norm(system.rhs)
    residual = np.linalg.norm(system.rhs - system.matrix @ x)
    return float(residual / norm_b) if norm_b > 0.0 else float(residual)


class ScaledIlut:
    """
    ILUT of the row-equilibrated matrix D·A, applied as a right
    preconditioner of A: M⁻¹v = (LU)⁻¹ (D v).

    Interior rows carry weights of order 1/h² (1/δ² for hybrid rows) while
    Dirichlet rows are unit rows; D brings every row to unit max-norm.
    """

    def __init__(self, factor, scale: np.ndarray):
        self.factor = factor
        self.scale = scale

    def solve(self, v: np.ndarray) -> np.ndarray:
        return self.factor.solve(self.scale * v)


def row_scaling(matrix: sp.csr_matrix) -> np.ndarray:
    """Reciprocal max-norm of every row; empty rows keep unit scale."""
    peak = np.asarray(abs(matrix).max(axis=1).todense()).reshape(-1)
    scale = np.ones(matrix.shape[0])
    nonzero = peak > 0.0
    scale[nonzero] = 1.0 / peak[nonzero]
    return scale


def _ilut(matrix: sp.csr_matrix, ilut: IlutSettings) -> ScaledIlut:
    scale = row_scaling(matrix)
    scaled = sp.diags(scale) @ matrix
    try:
        factor = spilu(
            sp.csc_matrix(scaled), drop_tol=ilut.drop_tol, fill_factor=ilut.fill_factor
        )
    except RuntimeError as e:
        raise SolverError(f"ILUT factorization failed: {e}") from e

    precond = ScaledIlut(factor, scale)
    ones = np.ones(matrix.shape[0])
    with np.errstate(all="ignore"):
        check = precond.solve(matrix @ ones)
        deviation = float(np.linalg.norm(check - ones) / np.linalg.norm(ones))
    if not math.isfinite(deviation) or deviation > PRECONDITIONER_DEVIATION_LIMIT:
        raise SolverError(
            "ILUT preconditioner is unstable",
            {"deviation": f"{deviation:.3e}", "limit": PRECONDITIONER_DEVIATION_LIMIT},
        )
    logger.debug(f"ILUT preconditioner: |M⁻¹A·1 - 1| / |1| = {deviation:.3e}")
    return precond


def solve_bicgstab_ilut(
    system: SparseSystem,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    ilut: Optional[IlutSettings] = None,
) -> SolveReport:
    """
    BiCGSTAB from a zero initial guess with right ILUT preconditioning,
    iterating until the true relative residual is <= tol or max_iter is reached.
    ILUT factors the row-equilibrated matrix; the residual is that of the
    unscaled system.

    Raises:
        ParameterError: for a non-square system or non-positive tol
        SolverError: on breakdown, a failed factorization or an unstable
            preconditioner
    """
    A = system.matrix
    b = system.rhs
    size = system.size
    if A.shape != (size, size) or b.shape != (size,):
        raise ParameterError("System must be square with a matching rhs", {"shape": A.shape})
    if not tol > 0.0:
        raise ParameterError("Tolerance must be positive", {"tol": tol})
    if max_iter is None:
        max_iter = 10 * size
    ilut = ilut or IlutSettings()

    x = np.zeros(size)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return SolveReport(solution=x, iterations=0, final_residual=0.0, converged=True)

    precond = _ilut(A, ilut)
    target = tol * norm_b

    r = b.copy()
    r_hat = r.copy()
    p = r.copy()
    rho = float(r_hat @ r)
    iterations = 0
    converged = False

    while iterations < max_iter:
        iterations += 1

        Mp = precond.solve(p)
        AMp = A @ Mp
        denom = float(r_hat @ AMp)
        if abs(denom) < BREAKDOWN_TOL:
            raise SolverError("BiCGSTAB breakdown: (r_hat, A M p) vanished", {"iteration": iterations})
        alpha = rho / denom

        s = r - alpha * AMp
        if np.linalg.norm(s) <= target:
            x = x + alpha * Mp
            r = s
        else:
            Ms = precond.solve(s)
            AMs = A @ Ms
            t_norm2 = float(AMs @ AMs)
            if t_norm2 < BREAKDOWN_TOL:
                raise SolverError("BiCGSTAB breakdown: A M s vanished", {"iteration": iterations})
            omega = float(AMs @ s) / t_norm2
            x = x + alpha * Mp + omega * Ms
            r = s - omega * AMs

            rho_next = float(r_hat @ r)
            if abs(rho_next) < BREAKDOWN_TOL or omega == 0.0:
                if np.linalg.norm(b - A @ x) <= target:
                    converged = True
                    break
                raise SolverError("BiCGSTAB breakdown: rho vanished", {"iteration": iterations})
            beta = (rho_next / rho) * (alpha / omega)
            rho = rho_next
            p = r + beta * (p - omega * AMp)

        logger.debug(f"BiCGSTAB iteration {iterations}: |r|/|b| = {np.linalg.norm(r) / norm_b:.3e}")

        if np.linalg.norm(r) <= target:
            true_r = b - A @ x
            if np.linalg.norm(true_r) <= target:
                converged = True
                break
            # residual replacement: restart from the true residual
            r = true_r
            r_hat = r.copy()
            p = r.copy()
            rho = float(r_hat @ r)

    final_residual = relative_residual(system, x)
    converged = converged and final_residual <= tol
    if not converged:
        logger.warning(
            f"⚠️ BiCGSTAB stopped after {iterations} iterations without converging "
            f"(residual {final_residual:.3e}, tol {tol:.1e})"
        )
    return SolveReport(
        solution=x,
        iterations=iterations,
        final_residual=final_residual,
        converged=converged,
    )


def solve_with_settings(system: SparseSystem, settings: SolverSettings) -> SolveReport:
    return solve_bicgstab_ilut(system, settings.tol, settings.max_iter, settings.ilut)


def solve_direct_dense(system: SparseSystem) -> np.ndarray:
    """
    Dense LU solve of the same system (test oracle).

    Raises:
        ParameterError: if N exceeds the dense size guard
        SolverError: if the matrix is singular
    """
    if system.size > DENSE_SIZE_LIMIT:
        raise ParameterError(
            "Dense solve limited to small systems",
            {"N": system.size, "limit": DENSE_SIZE_LIMIT},
        )
    dense = system.matrix.toarray()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            solution = solve(dense, system.rhs)
    except (LinAlgError, LinAlgWarning) as e:
        raise SolverError(f"Dense solve failed: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise SolverError("Dense solve produced non-finite values")
    return solution


def export_matrix_market(system: SparseSystem, path: Union[str, Path]) -> Path:
    """Write the system matrix in Matrix Market coordinate format."""
    target = Path(path)
    if target.suffix != ".mtx":
        target = target.with_name(target.name + ".mtx")
    scipy.io.mmwrite(str(target), system.matrix, comment="meshless Poisson system")
    logger.info(f"💾 Matrix exported to {target}")
    return target
