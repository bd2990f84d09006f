"""
Wall-clock measurements for detector runs and batch operations.
"""

import time
import typing


class Timer:
    """
    A monotonic stopwatch with named laps.
    """

    def __init__(self) -> None:
        self.start = time.perf_counter()
        self.saved_times: typing.List[typing.Tuple[float, str]] = []

    def time(self) -> float:
        """
        Seconds since the creation (or last reset) of the timer.
        """
        return time.perf_counter() - self.start

    def reset(self) -> None:
        self.start = time.perf_counter()
        self.saved_times = []

    def lap(self, label: str) -> float:
        elapsed = self.time()
        self.saved_times.append((elapsed, label))
        return elapsed

    def get_laps(self) -> typing.Dict[str, float]:
        return {label: t for t, label in self.saved_times}
