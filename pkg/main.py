"""
Learned Partition Sort API - FastAPI Application
Main entry point for the HTTP surface over the sorting library.

Environment Variables (all optional, prefix LPS_):
- LPS_LOG_LEVEL: logging level (default: INFO)
- LPS_MAX_HTTP_KEYS: largest key list accepted by POST /sort
- LPS_WORKERS, LPS_RMI_BUCKET_COUNT, ...: SortConfig defaults
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from app.config.log import configure_logging
from app.config.settings import get_settings
from app.routers import bench, datasets, sorting

logger = logging.getLogger("app")

VERSION = "1.0.0"


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan context manager for startup and shutdown events."""
    settings = get_settings()
    configure_logging(settings.log_level)
    logger.info("starting Learned Partition Sort API (workers=%d)", settings.workers)
    yield
    logger.info("shutting down Learned Partition Sort API")


app = FastAPI(
    title="Learned Partition Sort API",
    description="Learned-pivot sorting: RMI-driven block partitioning, splitter-tree fallback, classic learned sorts, dataset generators and benchmarks.",
    version=VERSION,
    lifespan=lifespan
)

app.include_router(datasets.router)
app.include_router(sorting.router)
app.include_router(bench.router)


@app.get("/", tags=["health"])
async def root():
    """Root endpoint - health check."""
    return {
        "message": "Learned Partition Sort API",
        "status": "healthy",
        "version": VERSION
    }


@app.get("/health", tags=["health"])
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy"}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
