import os
from typing import Callable, List, Optional, TypeVar

from joblib import Parallel, delayed

from dampwave.exceptions import InvalidParameterError


THREADS_ENV_VAR = "DAMPWAVE_THREADS"
# independent of the worker count
CHUNK_SIZE = 256

T = TypeVar("T")


def thread_count() -> int:
    raw = os.getenv(THREADS_ENV_VAR, "1")
    try:
        value = int(raw)
    except ValueError:
        raise InvalidParameterError(THREADS_ENV_VAR, raw, "a positive integer")
    if value < 1:
        raise InvalidParameterError(THREADS_ENV_VAR, raw, "a positive integer")
    return value


def chunk_slices(n_items: int, chunk_size: int = CHUNK_SIZE) -> List[slice]:
    return [slice(start, min(start + chunk_size, n_items)) for start in range(0, n_items, chunk_size)]


def map_chunks(
    fn: Callable[[slice], T], n_items: int, n_jobs: Optional[int] = None
) -> List[T]:
    """Apply fn to consecutive index slices; results come back in slice order."""
    slices = chunk_slices(n_items)
    n_jobs = thread_count() if n_jobs is None else n_jobs
    if n_jobs == 1 or len(slices) <= 1:
        return [fn(part) for part in slices]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(part) for part in slices)
