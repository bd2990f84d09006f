# flake8: noqa F401
from .parallel import in_parallel
from .timer import Timer
from .union_find import UnionFind

__all__ = ["Timer", "UnionFind", "in_parallel"]
