"""Latency series, pair-throughput accounting, and the percentile estimator."""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass


def percentile(series: list[float], p: float) -> float:
    """Nearest-rank percentile: sorted value at 1-based index ceil(p * N)."""
    if not series:
        raise ValueError("percentile of an empty series")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    ordered = sorted(series)
    rank = math.ceil(p * len(ordered))
    return ordered[rank - 1]


@dataclass(frozen=True)
class MetricsSnapshot:
    requests_total: int
    pairs_processed: int
    overall_ms: tuple[float, ...]
    compute_ms: tuple[float, ...]
    transfer_pinned_s: tuple[float, ...]
    transfer_pageable_s: tuple[float, ...]


class MetricsRegistry:
    """Append-only request metrics; safe for concurrent writers.

    ``pairs_processed`` counts real (never padded) user-item pairs. Completion
    events carry timestamps so windowed throughput can be computed after the
    fact without mutating the samples.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._overall_ms: list[float] = []
        self._compute_ms: list[float] = []
        self._transfer_pinned_s: list[float] = []
        self._transfer_pageable_s: list[float] = []
        self._pair_events: list[tuple[float, int]] = []
        self.requests_total = 0
        self.pairs_processed = 0

    def record_request(
        self,
        overall_ms: float,
        compute_ms: float,
        pairs: int,
        transfer_pinned_s: float = 0.0,
        transfer_pageable_s: float = 0.0,
        completed_at: float | None = None,
    ) -> None:
        if completed_at is None:
            completed_at = time.monotonic()
        with self._lock:
            self._overall_ms.append(overall_ms)
            self._compute_ms.append(compute_ms)
            self._transfer_pinned_s.append(transfer_pinned_s)
            self._transfer_pageable_s.append(transfer_pageable_s)
            self._pair_events.append((completed_at, pairs))
            self.requests_total += 1
            self.pairs_processed += pairs

    def snapshot(self) -> MetricsSnapshot:
        with self._lock:
            return MetricsSnapshot(
                requests_total=self.requests_total,
                pairs_processed=self.pairs_processed,
                overall_ms=tuple(self._overall_ms),
                compute_ms=tuple(self._compute_ms),
                transfer_pinned_s=tuple(self._transfer_pinned_s),
                transfer_pageable_s=tuple(self._transfer_pageable_s),
            )

    def pair_events(self) -> list[tuple[float, int]]:
        with self._lock:
            return list(self._pair_events)


def throughput(registry: MetricsRegistry, window_s: float, now: float | None = None) -> float:
    """Real pairs completed within the trailing window, per second."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if now is None:
        now = time.monotonic()
    pairs = sum(n for t, n in registry.pair_events() if now - window_s < t <= now)
    return pairs / window_s
