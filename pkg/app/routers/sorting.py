"""
Sorting endpoint: sort a JSON list of keys or floats with a registry algorithm.
"""
import logging
from typing import Dict, List

import numpy as np
from fastapi import APIRouter, Depends, HTTPException

from app.config.algorithms import get_all_algorithms, supports_workers
from app.config.settings import Settings, get_settings
from app.dependencies.settings import get_sort_config
from app.models.schemas import SortConfig, SortRequest, SortResponse
from app.services.bench import run_algorithm
from app.services.exceptions import LearnedSortError
from app.services.keys import decode_floats, encode_floats
from app.services.sorter import verify_sorted

router = APIRouter(tags=["sorting"])
logger = logging.getLogger(__name__)


@router.get("/algorithms", response_model=List[Dict])
async def list_algorithms():
    """List the registered sorting algorithms."""
    return get_all_algorithms()


@router.post("/sort", response_model=SortResponse)
def sort_keys(
    request: SortRequest,
    settings: Settings = Depends(get_settings),
    cfg: SortConfig = Depends(get_sort_config),
):
    """Sort the submitted keys and return them with the elapsed time."""
    payload = request.keys if request.keys is not None else request.values
    if len(payload) > settings.max_http_keys:
        raise HTTPException(
            status_code=413,
            detail=f"{len(payload)} keys exceed the limit of {settings.max_http_keys}",
        )
    try:
        if request.values is not None:
            keys = encode_floats(request.values)
        else:
            keys = np.array(request.keys, dtype=np.uint64)
        if request.workers > 1 and not supports_workers(request.algorithm):
            logger.info("%s is sequential; ignoring workers=%d", request.algorithm, request.workers)
        run_cfg = cfg.model_copy(update={"workers": request.workers})
        elapsed = run_algorithm(request.algorithm, keys, run_cfg)
        verified = verify_sorted(keys).ok
        if request.values is not None:
            return SortResponse(
                algorithm=request.algorithm, n=int(keys.size), elapsed_ns=elapsed,
                verified=verified, values=decode_floats(keys).tolist(),
            )
        return SortResponse(
            algorithm=request.algorithm, n=int(keys.size), elapsed_ns=elapsed,
            verified=verified, keys=keys.tolist(),
        )
    except LearnedSortError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))
