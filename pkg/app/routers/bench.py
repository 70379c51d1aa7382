"""
Benchmark and pivot-quality endpoints.
"""
from fastapi import APIRouter, Depends, HTTPException

from app.dependencies.settings import get_sort_config
from app.models.schemas import BenchReport, BenchRequest, PivotQualityRequest, PivotQualityResult, SortConfig
from app.services.bench import bench_dataset, run_pivot_quality
from app.services.exceptions import LearnedSortError

router = APIRouter(tags=["bench"])


@router.post("/bench", response_model=BenchReport)
def bench(request: BenchRequest, cfg: SortConfig = Depends(get_sort_config)):
    """Run a benchmark and return every record plus the summaries."""
    try:
        run_cfg = cfg.model_copy(update={"workers": request.workers, "seed": request.seed})
        return bench_dataset(request.algorithms, request.dataset, request.n, request.runs, run_cfg)
    except LearnedSortError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/pivot-quality", response_model=PivotQualityResult)
def pivot_quality(request: PivotQualityRequest, cfg: SortConfig = Depends(get_sort_config)):
    """Compare random and learned pivots on one dataset."""
    try:
        run_cfg = cfg.model_copy(update={"seed": request.seed})
        return run_pivot_quality(request.dataset, request.n, request.pivots, request.trials, request.seed, run_cfg)
    except LearnedSortError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))
