import os
import typing

from joblib import Parallel, delayed

T = typing.TypeVar("T")
R = typing.TypeVar("R")


def in_parallel(
    func: typing.Callable[[T], R], items: typing.Sequence[T], n_jobs: int = 1
) -> typing.List[R]:
    """
    Apply ``func`` to every item with at most ``n_jobs`` workers and return
    the results in input order. ``n_jobs < 1`` means one worker per CPU.
    Runs on threads, so ``func`` may be a closure.
    """
    if n_jobs < 1:
        n_jobs = os.cpu_count() or 1
    if n_jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    return list(Parallel(n_jobs=n_jobs, prefer="threads")(delayed(func)(item) for item in items))
