"""
FastAPI Backend Application

HTTP surface of the meshless benchmark harness: logging setup, error
handling, health check and route registration.
"""

from fastapi import FastAPI, Request, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from pydantic import ValidationError
import logging
import os
from dotenv import load_dotenv

from app import __version__
from app.models.response import HealthResponse
from app.routes.experiments import router as experiments_router
from app.services.errors import MeshlessError, ParameterError

# Load environment variables from .env file
load_dotenv()

# Configure logging
logging.basicConfig(
    level=getattr(logging, os.getenv("MESHLESS_LOG_LEVEL", "INFO").upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Create FastAPI instance
app = FastAPI(
    title="Meshless Benchmark Service",
    description="RBF-FD and hybrid RBF/FD Poisson benchmarks on scattered nodes",
    version=__version__
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(experiments_router, prefix="/api/v1", tags=["Experiments"])


@app.on_event("startup")
async def startup_event():
    logger.info("🚀 Starting meshless benchmark service...")


# -------------------------
# Health Check
# -------------------------
@app.get("/health", response_model=HealthResponse)
@app.head("/health")
async def health_check():
    """Health check endpoint for monitoring and load balancers."""
    return HealthResponse(
        status="healthy",
        message="Meshless benchmark service is running",
        version=__version__,
    )


# -------------------------
# Exception Handlers
# -------------------------
def error_content(message: str, status_code: int) -> dict:
    return {"error": True, "message": message, "status_code": status_code}


@app.exception_handler(ParameterError)
async def parameter_exception_handler(request: Request, exc: ParameterError):
    logger.error(f"Parameter error: {exc}")
    return JSONResponse(status_code=422, content=error_content(str(exc), 422))


@app.exception_handler(ValidationError)
async def model_validation_exception_handler(request: Request, exc: ValidationError):
    logger.error(f"Validation error: {exc.errors()}")
    return JSONResponse(status_code=422, content=error_content("Validation error", 422))


@app.exception_handler(MeshlessError)
async def meshless_exception_handler(request: Request, exc: MeshlessError):
    logger.error(f"❌ {type(exc).__name__}: {exc}")
    return JSONResponse(status_code=400, content=error_content(str(exc), 400))


@app.exception_handler(HTTPException)
async def http_exception_handler(request: Request, exc: HTTPException):
    logger.error(f"HTTP error {exc.status_code}: {exc.detail}")
    return JSONResponse(
        status_code=exc.status_code,
        content=error_content(exc.detail, exc.status_code),
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    logger.error(f"Validation error: {exc.errors()}")
    return JSONResponse(
        status_code=422,
        content={**error_content("Validation error", 422), "details": exc.errors()},
    )


@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    logger.error(f"Unexpected error: {str(exc)}")
    return JSONResponse(status_code=500, content=error_content("Internal server error", 500))


# -------------------------
# Root Endpoint
# -------------------------
@app.get("/")
async def root():
    return {
        "message": "Meshless Benchmark Service API",
        "version": __version__,
        "docs_url": "/docs",
        "health_check": "/health",
        "endpoints": {
            "run": "/api/v1/experiments/run",
            "sweep": "/api/v1/experiments/sweep",
            "nodes": "/api/v1/nodes"
        }
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "app.main:app",
        host=os.getenv("MESHLESS_API_HOST", "0.0.0.0"),
        port=int(os.getenv("MESHLESS_API_PORT", "8000")),
    )
