from __future__ import annotations

import os
from typing import Callable, Iterable, List, TypeVar

from joblib import Parallel, delayed

T = TypeVar("T")
R = TypeVar("R")


def resolve_jobs(jobs: int | None) -> int:
    """0 or None means every available core."""
    if jobs is None or jobs <= 0:
        return max(os.cpu_count() or 1, 1)
    return int(jobs)


def run_parallel(func: Callable[[T], R], items: Iterable[T], jobs: int | None = 1) -> List[R]:
    """Map `func` over `items`; results keep the input order."""
    materialized = list(items)
    n_jobs = min(resolve_jobs(jobs), max(len(materialized), 1))
    if n_jobs == 1 or len(materialized) <= 1:
        return [func(item) for item in materialized]
    return list(Parallel(n_jobs=n_jobs, prefer="threads")(delayed(func)(item) for item in materialized))
