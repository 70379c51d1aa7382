"""
Dataset endpoints: list the generator registry and generate datasets.
"""
from typing import Dict, List

from fastapi import APIRouter, HTTPException, status

from app.config.datasets import get_all_datasets
from app.models.schemas import DatasetSpec, DatasetSummary, GenerateRequest
from app.services.datasets import generate, summarize, write_keys
from app.services.exceptions import LearnedSortError

router = APIRouter(prefix="/datasets", tags=["datasets"])


@router.get("/", response_model=List[Dict])
async def list_datasets():
    """List the synthetic generators."""
    return get_all_datasets()


@router.post("/generate", response_model=DatasetSummary, status_code=status.HTTP_201_CREATED)
def generate_dataset(request: GenerateRequest):
    """Generate a dataset, optionally write it as a key file, and return its statistics."""
    try:
        spec = DatasetSpec(name=request.name, n=request.n, seed=request.seed)
        keys = generate(spec)
        if request.out_path:
            write_keys(request.out_path, keys)
        return summarize(spec, keys, request.out_path)
    except LearnedSortError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))
