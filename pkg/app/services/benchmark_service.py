"""
Benchmark Service

Experiment driver for the Dirichlet Poisson problem on the unit square

    Δu = f in (0,1)^2,  u = 0 on the boundary,
    f(x, y) = -2 π^2 sin(πx) sin(πy),  u(x, y) = sin(πx) sin(πy)

Flow: config → node set → phase 1 (stencils, weight rows, sparse assembly)
→ phase 2 (BiCGSTAB + ILUT) → relative errors at interior nodes.

Also runs the sigma sweeps, the method/degree comparison, the convergence
study on refined node sets and the phase timing table, and persists rows
as CSV with `#` metadata lines.
"""

import logging
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd

from app.models.config import ExperimentConfig, Method, NodeLayout
from app.models.response import (
    RESULT_COLUMNS,
    ConvergenceRow,
    ErrorReport,
    ExperimentResponse,
    ResultRow,
    SolveSummary,
    TimingReport,
)
from app.services.errors import MeshlessError, ParameterError, SolverError
from app.services.hybrid_service import (
    HybridVariant,
    StencilKind,
    assemble_all_hybrid,
    make_virtual_stencil,
)
from app.services.node_service import NodeSet, Stencil, generate_nodes, uniform_grid_nodes
from app.services.rbf_fd_service import LAPLACIAN, assemble_all_weights, stencil_table
from app.services.solver_service import (
    SolveReport,
    SparseSystem,
    assemble_system,
    solve_with_settings,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

# |u| below this is excluded from relative errors
ERROR_FLOOR = 1e-300

DEFAULT_SIGMA_RANGE = (1e-2, 1e1)
DEFAULT_SIGMA_COUNT = 40

CSV_METADATA: Dict[str, str] = {
    "mean_rel_divisor": "interior_count",
    "phase1": "stencil_search+weights+assembly;excludes=node_generation",
    "phase2": "iterative_solve",
    "timing": "median_of_repeats_after_discarded_warmup",
}


# -------------------------
# Analytic problem
# -------------------------
def _coordinates(p) -> Tuple[np.ndarray, np.ndarray, bool]:
    points = np.asarray(p, dtype=float)
    single = points.ndim == 1
    points = points.reshape(-1, 2)
    return points[:, 0], points[:, 1], single


def analytic_u(p) -> Union[float, np.ndarray]:
    """Exact solution sin(πx) sin(πy) at one point or an (K, 2) array."""
    x, y, single = _coordinates(p)
    values = np.sin(np.pi * x) * np.sin(np.pi * y)
    return float(values[0]) if single else values


def analytic_f(p) -> Union[float, np.ndarray]:
    """Source term -2π² sin(πx) sin(πy)."""
    x, y, single = _coordinates(p)
    values = -2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    return float(values[0]) if single else values


def compute_errors(nodes: NodeSet, solution: np.ndarray) -> ErrorReport:
    """
    Max and mean relative errors over interior nodes; the mean divides by
    the number of interior nodes taken into account.
    """
    values = np.asarray(solution, dtype=float).reshape(-1)
    if values.shape[0] != nodes.size:
        raise ParameterError(
            "Solution length must equal the node count",
            {"expected": nodes.size, "actual": values.shape[0]},
        )

    interior = nodes.interior_indices
    exact = analytic_u(nodes.points[interior])
    exact = np.atleast_1d(exact)
    keep = np.abs(exact) >= ERROR_FLOOR
    excluded = int(np.count_nonzero(~keep))
    if excluded:
        logger.warning(f"⚠️ {excluded} interior nodes excluded from relative errors (|u| vanishes)")

    relative = np.abs(exact[keep] - values[interior][keep]) / np.abs(exact[keep])
    if relative.size == 0:
        return ErrorReport(max_rel=0.0, mean_rel=0.0, interior_count=0, excluded_count=excluded)
    return ErrorReport(
        max_rel=float(relative.max()),
        mean_rel=float(relative.sum() / relative.size),
        interior_count=int(relative.size),
        excluded_count=excluded,
    )


# -------------------------
# Phases
# -------------------------
def build_nodes(cfg: ExperimentConfig) -> NodeSet:
    if cfg.layout is NodeLayout.GRID:
        return uniform_grid_nodes(cfg.h)
    return generate_nodes(cfg.h, cfg.seed)


def uses_center_stencils(method: Method) -> bool:
    """True when every row is built on the center's own kNN stencil."""
    return not method.is_alternative


def compute_operator_rows(
    nodes: NodeSet,
    cfg: ExperimentConfig,
    stencils: Optional[Sequence[Stencil]] = None,
) -> list:
    """
    Laplacian rows of every interior node for the configured method.
    A precomputed kNN table is used by RBF-FD and the shared hybrid only.
    """
    rbf = cfg.rbf_config()
    if uses_center_stencils(cfg.method) and stencils is None:
        stencils = stencil_table(nodes, rbf.stencil_size)
    if cfg.method is Method.RBF_FD:
        return assemble_all_weights(nodes, rbf, LAPLACIAN, stencils, workers=cfg.workers)

    kind = StencilKind.FIVE_POINT if cfg.method.point_count == 5 else StencilKind.NINE_POINT
    vs = make_virtual_stencil(kind, cfg.sigma, nodes.h)
    if cfg.method.is_alternative:
        return assemble_all_hybrid(
            nodes, rbf, vs, HybridVariant.PER_VIRTUAL_NODE, workers=cfg.workers
        )
    return assemble_all_hybrid(
        nodes, rbf, vs, HybridVariant.SHARED_STENCIL, stencils, workers=cfg.workers
    )


def build_system(
    nodes: NodeSet,
    cfg: ExperimentConfig,
    stencils: Optional[Sequence[Stencil]] = None,
) -> SparseSystem:
    """Phase 1: stencils, weight rows and the global sparse system."""
    rows = compute_operator_rows(nodes, cfg, stencils)
    return assemble_system(nodes, rows, analytic_f)


def solve_system(system: SparseSystem, cfg: ExperimentConfig) -> SolveReport:
    """Phase 2; a solver breakdown is reported as a non-converged solve."""
    try:
        return solve_with_settings(system, cfg.solver_settings())
    except SolverError as e:
        logger.warning(f"⚠️ Solver failed for {cfg.method.value} (sigma={cfg.sigma}): {e}")
        return SolveReport(
            solution=np.full(system.size, np.nan),
            iterations=0,
            final_residual=float("nan"),
            converged=False,
        )


def _timed(action: Callable[[], T]) -> Tuple[T, float]:
    start = time.perf_counter()
    result = action()
    return result, (time.perf_counter() - start) * 1000.0


@dataclass
class ExperimentResult:
    """Outcome of run_experiment; `system` is the last assembled system."""

    config: ExperimentConfig
    nodes: NodeSet
    system: SparseSystem
    solve: SolveReport
    errors: ErrorReport
    timing: TimingReport

    def to_row(self) -> ResultRow:
        return ResultRow(
            method=self.config.method.value,
            m=self.config.m,
            n=self.config.stencil_size,
            sigma=self.config.sigma,
            h=self.config.h,
            seed=self.config.seed,
            mean_rel=self.errors.mean_rel,
            max_rel=self.errors.max_rel,
            iterations=self.solve.iterations,
            converged=self.solve.converged,
            phase1_ms=self.timing.phase1_ms,
            phase2_ms=self.timing.phase2_ms,
        )

    def to_response(self) -> ExperimentResponse:
        return ExperimentResponse(
            config=self.config,
            node_count=self.nodes.size,
            errors=self.errors,
            timing=self.timing,
            solve=SolveSummary(
                iterations=self.solve.iterations,
                final_residual=self.solve.final_residual,
                converged=self.solve.converged,
            ),
        )


def run_experiment(
    cfg: ExperimentConfig,
    nodes: Optional[NodeSet] = None,
    stencils: Optional[Sequence[Stencil]] = None,
) -> ExperimentResult:
    """
    Solve the Poisson problem for one configuration.

    Node generation happens once and is not timed. A discarded warm-up run
    is followed by `repeats` timed runs of each phase; the reported times are
    the medians. The numerics are identical in every run.

    A precomputed kNN table only feeds the warm-up; timed phase 1 always
    includes the stencil search.
    """
    if nodes is None:
        nodes = build_nodes(cfg)
    logger.info(
        f"🧪 Running {cfg.method.value} m={cfg.m} n={cfg.stencil_size} sigma={cfg.sigma} "
        f"on {nodes.size} nodes ({cfg.repeats} timed repeats)"
    )

    system = build_system(nodes, cfg, stencils)
    report = solve_system(system, cfg)

    phase1: List[float] = []
    phase2: List[float] = []
    for _ in range(cfg.repeats):
        system, elapsed = _timed(lambda: build_system(nodes, cfg))
        phase1.append(elapsed)
        report, elapsed = _timed(lambda: solve_system(system, cfg))
        phase2.append(elapsed)

    timing = TimingReport(
        phase1_ms=statistics.median(phase1),
        phase2_ms=statistics.median(phase2),
        repeats=cfg.repeats,
        phase1_samples_ms=phase1,
        phase2_samples_ms=phase2,
    )
    errors = compute_errors(nodes, report.solution)
    logger.info(
        f"✅ {cfg.method.value}: mean_rel={errors.mean_rel:.3e} max_rel={errors.max_rel:.3e} "
        f"iterations={report.iterations} converged={report.converged} "
        f"phase1={timing.phase1_ms:.1f}ms phase2={timing.phase2_ms:.1f}ms"
    )
    return ExperimentResult(cfg, nodes, system, report, errors, timing)


def failed_row(cfg: ExperimentConfig) -> ResultRow:
    nan = float("nan")
    return ResultRow(
        method=cfg.method.value, m=cfg.m, n=cfg.stencil_size, sigma=cfg.sigma,
        h=cfg.h, seed=cfg.seed, mean_rel=nan, max_rel=nan, iterations=0,
        converged=False, phase1_ms=nan, phase2_ms=nan,
    )


def _row_or_failure(
    cfg: ExperimentConfig,
    nodes: NodeSet,
    stencils: Optional[Sequence[Stencil]] = None,
) -> ResultRow:
    try:
        return run_experiment(cfg, nodes, stencils).to_row()
    except MeshlessError as e:
        logger.warning(f"⚠️ {cfg.method.value} m={cfg.m} sigma={cfg.sigma} failed: {e}")
        return failed_row(cfg)


# -------------------------
# Studies
# -------------------------
def default_sigmas(
    count: int = DEFAULT_SIGMA_COUNT,
    low: float = DEFAULT_SIGMA_RANGE[0],
    high: float = DEFAULT_SIGMA_RANGE[1],
) -> List[float]:
    """Log-spaced sigma grid, by default 40 values in [1e-2, 1e1]."""
    return [float(s) for s in np.logspace(math.log10(low), math.log10(high), count)]


def _validate_sigmas(sigmas: Sequence[float]) -> List[float]:
    values = [float(s) for s in sigmas]
    if not values or any(not s > 0.0 for s in values):
        raise ParameterError("Sweep needs at least one positive sigma", {"sigmas": values})
    return values


def run_sigma_sweep(
    base: ExperimentConfig,
    sigmas: Optional[Sequence[float]] = None,
    nodes: Optional[NodeSet] = None,
) -> List[ResultRow]:
    """
    One row per sigma. The node set is shared by all rows; RBF-FD does not
    depend on sigma and is solved once. The shared hybrid reuses one kNN
    table for the untimed build of every sigma.
    """
    values = _validate_sigmas(default_sigmas() if sigmas is None else sigmas)
    if nodes is None:
        nodes = build_nodes(base)
    logger.info(f"📈 Sigma sweep of {base.method.value} m={base.m} over {len(values)} values")

    if base.method is Method.RBF_FD:
        row = _row_or_failure(base.copy(update={"sigma": values[0]}), nodes)
        return [row.copy(update={"sigma": s}) for s in values]

    stencils = None
    if uses_center_stencils(base.method):
        try:
            stencils = stencil_table(nodes, base.stencil_size)
        except MeshlessError as e:
            # every row reports the failure on its own
            logger.warning(f"⚠️ Stencil table for the sweep unavailable: {e}")
    return [_row_or_failure(base.copy(update={"sigma": s}), nodes, stencils) for s in values]


def run_method_sweep(
    base: ExperimentConfig,
    methods: Sequence[Method],
    degrees: Sequence[int],
    sigmas: Optional[Sequence[float]] = None,
) -> List[ResultRow]:
    """Sigma sweeps for every (degree, method) pair on one shared node set."""
    nodes = build_nodes(base)
    rows: List[ResultRow] = []
    for m in degrees:
        for method in methods:
            cfg = base.copy(update={"m": int(m), "method": Method(method)})
            rows.extend(run_sigma_sweep(cfg, sigmas, nodes))
    return rows


def observed_order(errors: Sequence[float], spacings: Sequence[float]) -> List[float]:
    """log(E_i / E_{i-1}) / log(h_i / h_{i-1}); NaN for the first level."""
    orders = [float("nan")]
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        h0, h1 = spacings[i - 1], spacings[i]
        if e0 > 0.0 and e1 > 0.0 and h0 != h1:
            orders.append(math.log(e1 / e0) / math.log(h1 / h0))
        else:
            orders.append(float("nan"))
    return orders


def run_convergence_study(base: ExperimentConfig, hs: Sequence[float]) -> List[ConvergenceRow]:
    """Solve on a refinement sequence and report observed orders of both errors."""
    results = [run_experiment(base.copy(update={"h": float(h)})) for h in hs]
    spacings = [result.nodes.h for result in results]
    order_max = observed_order([r.errors.max_rel for r in results], spacings)
    order_mean = observed_order([r.errors.mean_rel for r in results], spacings)

    rows = []
    for result, spacing, o_max, o_mean in zip(results, spacings, order_max, order_mean):
        rows.append(
            ConvergenceRow(
                method=base.method.value,
                m=base.m,
                sigma=base.sigma,
                h=spacing,
                nodes=result.nodes.size,
                mean_rel=result.errors.mean_rel,
                max_rel=result.errors.max_rel,
                order_max=o_max,
                order_mean=o_mean,
                converged=result.solve.converged,
            )
        )
    return rows


def run_timing_table(
    base: ExperimentConfig,
    degrees: Sequence[int],
    methods: Sequence[Method] = (Method.RBF_FD, Method.HYBRID5, Method.HYBRID9),
) -> List[ResultRow]:
    """Median phase timings at sigma = 1 for every (degree, method) pair."""
    nodes = build_nodes(base)
    rows = []
    for m in degrees:
        for method in methods:
            cfg = base.copy(update={"m": int(m), "method": Method(method), "sigma": 1.0})
            rows.append(_row_or_failure(cfg, nodes))
    return rows


# -------------------------
# CSV output
# -------------------------
def results_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([row.dict() for row in rows], columns=list(RESULT_COLUMNS))


def write_results_csv(
    rows: Sequence[Union[ResultRow, ConvergenceRow]],
    path: Union[str, Path],
    metadata: Optional[Dict[str, object]] = None,
) -> Path:
    """Write rows as CSV preceded by `# key=value` metadata lines."""
    target = Path(path)
    if rows and isinstance(rows[0], ConvergenceRow):
        frame = pd.DataFrame([row.dict() for row in rows])
    else:
        frame = results_frame(rows)  # type: ignore[arg-type]

    header = dict(CSV_METADATA)
    header.update({key: str(value) for key, value in (metadata or {}).items()})
    with target.open("w", newline="") as handle:
        for key, value in header.items():
            handle.write(f"# {key}={value}\n")
        frame.to_csv(handle, index=False, float_format="%.17g")
    logger.info(f"💾 Wrote {len(frame)} rows to {target}")
    return target


def read_results_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read a CSV written by write_results_csv, skipping metadata lines."""
    return pd.read_csv(Path(path), comment="#", float_precision="round_trip")


def read_csv_metadata(path: Union[str, Path]) -> Dict[str, str]:
    metadata: Dict[str, str] = {}
    with Path(path).open() as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            metadata[key] = value
    return metadata
