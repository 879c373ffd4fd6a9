from fastapi import APIRouter, Query
from fastapi.encoders import jsonable_encoder
from fastapi.responses import JSONResponse, PlainTextResponse
from functools import partial
from typing import Any
import asyncio
import logging
import math

from app.models.config import ExperimentConfig, NodeLayout
from app.models.request import SweepRequest
from app.models.response import ExperimentResponse, SweepResponse
from app.services.benchmark_service import build_nodes, run_experiment, run_method_sweep
from app.services.node_service import nodes_to_csv

# Configure logging
logger = logging.getLogger(__name__)

# Create router
router = APIRouter()


def finite_or_null(value: Any) -> Any:
    """JSON has no NaN/Infinity: failed rows carry null instead."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: finite_or_null(item) for key, item in value.items()}
    if isinstance(value, list):
        return [finite_or_null(item) for item in value]
    return value


async def run_blocking(func, *args):
    """Run CPU-bound numerics in the default executor."""
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(None, partial(func, *args))


@router.post("/experiments/run", response_model=ExperimentResponse)
async def run_endpoint(config: ExperimentConfig):
    """
    Solve the Poisson benchmark for one configuration and return its
    error report, phase timings and solver outcome.
    """
    logger.info(f"🧪 Experiment request: {config.method.value} m={config.m} h={config.h}")
    result = await run_blocking(run_experiment, config)
    response = result.to_response()
    return JSONResponse(content=finite_or_null(jsonable_encoder(response)))


@router.post("/experiments/sweep", response_model=SweepResponse)
async def sweep_endpoint(request: SweepRequest):
    """
    Sigma sweep for every requested (degree, method) pair on one shared node set.
    Failed or non-converged configurations are returned as rows with converged=false.
    """
    methods = request.methods or [request.base.method]
    degrees = request.degrees or [request.base.m]
    logger.info(
        f"📈 Sweep request: methods={[m.value for m in methods]} degrees={degrees} "
        f"sigmas={len(request.sigmas) if request.sigmas else 'default'}"
    )
    rows = await run_blocking(run_method_sweep, request.base, methods, degrees, request.sigmas)
    response = SweepResponse(rows=rows, failed=sum(1 for row in rows if not row.converged))
    return JSONResponse(content=finite_or_null(jsonable_encoder(response)))


@router.get("/nodes", response_class=PlainTextResponse)
async def nodes_endpoint(
    h: float = Query(0.05, gt=0.0, le=0.5),
    seed: int = Query(1, ge=0),
    layout: NodeLayout = Query(NodeLayout.SCATTERED),
):
    """Node set as `x,y,boundary` CSV."""
    cfg = ExperimentConfig(h=h, seed=seed, layout=layout)
    nodes = await run_blocking(build_nodes, cfg)
    logger.info(f"📍 Generated {nodes.size} nodes (h={h}, seed={seed}, layout={layout.value})")
    return PlainTextResponse(nodes_to_csv(nodes), media_type="text/csv")
