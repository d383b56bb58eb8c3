"""Ordered fan-out over a thread pool.

Results come back in input order whatever the completion order, so reports
built from them are deterministic.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar, Union

T = TypeVar("T")
R = TypeVar("R")


def gather(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1,
           return_exceptions: bool = False) -> List[Union[R, Exception]]:
    items = list(items)

    def call(item):
        try:
            return fn(item)
        except Exception as exc:
            if return_exceptions:
                return exc
            raise

    if jobs <= 1 or len(items) <= 1:
        return [call(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(call, items))
