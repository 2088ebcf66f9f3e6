from __future__ import annotations

from contextlib import contextmanager
import json
import os
import threading
import time
from typing import Dict, Iterator


_active_profiler: "PerformanceProfiler | None" = None


class PerformanceProfiler:
    """Accumulates wall time per named span. Safe to feed from worker threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._data: Dict[str, Dict[str, Dict[str, float]]] = {"spans": {}}

    def add_time(self, name: str, seconds: float) -> None:
        with self._lock:
            span = self._data["spans"].setdefault(
                name,
                {
                    "total_seconds": 0.0,
                    "calls": 0,
                },
            )
            span["total_seconds"] += float(seconds)
            span["calls"] += 1

    @contextmanager
    def span(self, name: str) -> Iterator[None]:
        started_at = time.perf_counter()
        try:
            yield
        finally:
            self.add_time(name, time.perf_counter() - started_at)

    def get_summary(self) -> dict:
        with self._lock:
            return {
                "spans": {
                    name: {
                        "total_seconds": values["total_seconds"],
                        "calls": values["calls"],
                    }
                    for name, values in self._data["spans"].items()
                }
            }

    def export_json(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        with open(path, "w", encoding="utf-8") as file:
            json.dump(self.get_summary(), file, ensure_ascii=False, indent=2)


def set_active_profiler(profiler: "PerformanceProfiler | None") -> None:
    global _active_profiler
    _active_profiler = profiler


@contextmanager
def profiled(name: str) -> Iterator[None]:
    """Record a span on the active profiler, if one is installed."""
    profiler = _active_profiler
    if profiler is None:
        yield
        return
    with profiler.span(name):
        yield
