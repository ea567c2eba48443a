"""Percentile estimator and throughput accounting."""

import threading

import numpy as np
import pytest

from flameserve.metrics import MetricsRegistry, percentile, throughput


def test_percentile_one_to_hundred():
    values = [float(v) for v in range(1, 101)]
    assert percentile(values, 0.99) == 99.0
    assert percentile(values, 1.0) == 100.0
    assert percentile(values, 0.5) == 50.0
    assert percentile(values, 0.001) == 1.0


def test_percentile_single_sample():
    for p in (0.01, 0.5, 0.99, 1.0):
        assert percentile([42.0], p) == 42.0


def test_percentile_matches_sort_based_reference():
    import math

    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 200))
        values = list(rng.choice([1.0, 2.5, 7.0, -3.0, 11.0], size=n))  # multiset with ties
        p = float(rng.uniform(0.001, 1.0))
        reference = sorted(values)[math.ceil(p * n) - 1]
        assert percentile(values, p) == reference


def test_percentile_errors():
    with pytest.raises(ValueError):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1.0], 0.0)
    with pytest.raises(ValueError):
        percentile([1.0], 1.5)


def test_throughput_from_events():
    reg = MetricsRegistry()
    reg.record_request(1.0, 0.5, pairs=400, completed_at=100.1)
    reg.record_request(1.0, 0.5, pairs=600, completed_at=100.4)
    assert throughput(reg, window_s=0.5, now=100.5) == pytest.approx(2000.0)


def test_throughput_empty_window():
    reg = MetricsRegistry()
    reg.record_request(1.0, 0.5, pairs=100, completed_at=10.0)
    assert throughput(reg, window_s=1.0, now=100.0) == 0.0


def test_throughput_rejects_bad_window():
    with pytest.raises(ValueError):
        throughput(MetricsRegistry(), window_s=0.0)


def test_registry_counts_real_pairs_only():
    # Callers pass only real pairs; a padded batch of 128 with 100 real rows
    # contributes 100.
    reg = MetricsRegistry()
    reg.record_request(2.0, 1.0, pairs=100)
    snap = reg.snapshot()
    assert snap.pairs_processed == 100
    assert snap.requests_total == 1


def test_registry_concurrent_appends():
    reg = MetricsRegistry()

    def writer():
        for _ in range(500):
            reg.record_request(1.0, 0.5, pairs=2)

    threads = [threading.Thread(target=writer) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    snap = reg.snapshot()
    assert snap.requests_total == 4000
    assert snap.pairs_processed == 8000
    assert len(snap.overall_ms) == 4000
