"""Load generator and ablation runner.

Workloads follow three scenarios: ``base`` (history 512, 128 candidates),
``long`` (history 1024, 512 candidates), and ``mixed`` (history 1024,
candidate counts drawn uniformly from {128, 256, 512, 1024}). Item ids follow
a uniform or Zipf distribution over a finite universe. Ablation toggles flip
the feature cache, the memory path (pinned+packed vs pageable+unpacked cost
model), and the routing mode (explicit executor pool vs implicit per-request
shapes). The driver and service share one process by default so OS networking
noise stays out of desk-scale measurements; a remote driver exercises a
separately started server over the wire instead.
"""

from __future__ import annotations

import csv
import logging
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .config import ServiceConfig
from .metrics import percentile
from .service import ScoreRequest, Service

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "scenario,cache,mem_opt,routing,throughput_pairs_per_s,"
    "overall_ms_mean,overall_ms_p99,compute_ms_mean,compute_ms_p99,"
    "cache_hit_rate,network_bytes,steady_state_allocs"
)


class EmptyRunError(RuntimeError):
    """The run produced no completed requests to report on."""


class Scenario(Enum):
    BASE = "base"
    LONG = "long"
    MIXED = "mixed"


#: scenario -> (history length, candidate-count choices)
SCENARIO_SHAPES: dict[Scenario, tuple[int, tuple[int, ...]]] = {
    Scenario.BASE: (512, (128,)),
    Scenario.LONG: (1024, (512,)),
    Scenario.MIXED: (1024, (128, 256, 512, 1024)),
}


@dataclass(frozen=True)
class KeyDistribution:
    kind: str = "zipf"  # "uniform" | "zipf"
    exponent: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "zipf"):
            raise ValueError(f"unknown key distribution {self.kind!r}")
        if self.kind == "zipf" and self.exponent <= 0:
            raise ValueError("zipf exponent must be positive")


@dataclass(frozen=True)
class WorkloadSpec:
    scenario: Scenario = Scenario.MIXED
    duration_s: float = 10.0
    concurrency: int = 8
    key_distribution: KeyDistribution = KeyDistribution()
    seed: int = 0
    num_requests: int | None = None  # finite stream when set; else duration-bound
    num_items: int = 100_000

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.num_items < 1:
            raise ValueError("num_items must be >= 1")
        if self.num_requests is not None and self.num_requests < 1:
            raise ValueError("num_requests must be >= 1 when set")


@dataclass(frozen=True)
class AblationConfig:
    cache: bool = True
    mem_opt: bool = True
    routing: str = "explicit"


@dataclass(frozen=True)
class RunReport:
    scenario: str
    cache: bool
    mem_opt: bool
    routing: str
    throughput_pairs_per_s: float
    overall_ms_mean: float
    overall_ms_p99: float
    compute_ms_mean: float
    compute_ms_p99: float
    cache_hit_rate: float
    network_bytes: int
    steady_state_allocs: int


class _KeySampler:
    """Finite-universe id sampler; Zipf uses an explicit rank CDF."""

    def __init__(self, dist: KeyDistribution, num_items: int) -> None:
        self.dist = dist
        self.num_items = num_items
        if dist.kind == "zipf":
            weights = 1.0 / np.arange(1, num_items + 1, dtype=np.float64) ** dist.exponent
            self._cdf = np.cumsum(weights / weights.sum())
        else:
            self._cdf = None

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self._cdf is None:
            return rng.integers(0, self.num_items, size=n, dtype=np.int64)
        return np.searchsorted(self._cdf, rng.random(n)).astype(np.int64)


def generate_workload(spec: WorkloadSpec) -> Iterator[ScoreRequest]:
    """Deterministic request stream for a spec; finite iff num_requests is set."""
    rng = np.random.default_rng(spec.seed)
    sampler = _KeySampler(spec.key_distribution, spec.num_items)
    hist_len, cand_choices = SCENARIO_SHAPES[spec.scenario]
    produced = 0
    while spec.num_requests is None or produced < spec.num_requests:
        cand_count = int(rng.choice(cand_choices)) if len(cand_choices) > 1 else cand_choices[0]
        yield ScoreRequest(
            user_id=int(rng.integers(0, 2**32)),
            history_item_ids=sampler.sample(rng, hist_len),
            candidate_item_ids=sampler.sample(rng, cand_count),
            context={},
        )
        produced += 1


def run_scenario(
    spec: WorkloadSpec,
    ablation: AblationConfig,
    service_config: ServiceConfig,
    on_drained: "Callable[[Service], None] | None" = None,
) -> RunReport:
    """Boot the service in-process, drive the workload, drain, and report.

    ``on_drained`` runs after the workload drains but before the service shuts
    down, for callers that want to inspect raw registries.
    """
    if spec.num_requests is None and spec.duration_s <= 0:
        raise EmptyRunError("duration_s must be positive for duration-bound runs")

    config = service_config.with_ablation(ablation.cache, ablation.mem_opt, ablation.routing)
    service = Service(config)
    requests = generate_workload(spec)
    feed_lock = threading.Lock()
    errors: list[BaseException] = []
    t_start = time.perf_counter()
    deadline = t_start + spec.duration_s if spec.num_requests is None else None

    def worker() -> None:
        while True:
            if deadline is not None and time.perf_counter() >= deadline:
                return
            with feed_lock:
                req = next(requests, None)
            if req is None:
                return
            try:
                service.handle_request(req)
            except BaseException as exc:  # noqa: BLE001 - surfaced after join
                errors.append(exc)
                return

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(spec.concurrency)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    active_s = time.perf_counter() - t_start

    try:
        if errors:
            raise errors[0]
        service.cache.drain_refreshes()
        report = _report_from_service(service, spec, ablation, active_s)
        if on_drained is not None:
            on_drained(service)
    finally:
        service.close()
    return report


def _report_from_service(
    service: Service, spec: WorkloadSpec, ablation: AblationConfig, active_s: float
) -> RunReport:
    snap = service.registry.snapshot()
    if snap.requests_total == 0:
        raise EmptyRunError("no requests completed in the run window")
    stats = service.cache_stats()
    lookups = stats.hits_fresh + stats.hits_stale + stats.misses
    overall = list(snap.overall_ms)
    compute = list(snap.compute_ms)
    return RunReport(
        scenario=spec.scenario.value,
        cache=ablation.cache,
        mem_opt=ablation.mem_opt,
        routing=ablation.routing,
        throughput_pairs_per_s=snap.pairs_processed / active_s,
        overall_ms_mean=sum(overall) / len(overall),
        overall_ms_p99=percentile(overall, 0.99),
        compute_ms_mean=sum(compute) / len(compute),
        compute_ms_p99=percentile(compute, 0.99),
        cache_hit_rate=(stats.hits_fresh + stats.hits_stale) / lookups if lookups else 0.0,
        network_bytes=service.store.bytes_served,
        steady_state_allocs=service.runner.steady_state_allocations,
    )


def run_scenario_remote(
    spec: WorkloadSpec, ablation: AblationConfig, base_url: str
) -> RunReport:
    """Drive a separately started server over HTTP and report client-side."""
    import httpx

    overall: list[float] = []
    compute: list[float] = []
    pairs = 0
    lock = threading.Lock()
    requests = generate_workload(spec)
    feed_lock = threading.Lock()
    errors: list[BaseException] = []
    t_start = time.perf_counter()
    deadline = t_start + spec.duration_s if spec.num_requests is None else None

    def worker() -> None:
        nonlocal pairs
        with httpx.Client(base_url=base_url, timeout=60.0) as client:
            while True:
                if deadline is not None and time.perf_counter() >= deadline:
                    return
                with feed_lock:
                    req = next(requests, None)
                if req is None:
                    return
                t0 = time.perf_counter()
                try:
                    resp = client.post(
                        "/score",
                        json={
                            "user_id": req.user_id,
                            "history": req.history_item_ids.tolist(),
                            "candidates": req.candidate_item_ids.tolist(),
                            "context": req.context,
                        },
                    )
                    resp.raise_for_status()
                except BaseException as exc:  # noqa: BLE001 - surfaced after join
                    errors.append(exc)
                    return
                body = resp.json()
                with lock:
                    overall.append((time.perf_counter() - t0) * 1000.0)
                    compute.append(body["compute_latency_ms"])
                    pairs += len(req.candidate_item_ids)

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(spec.concurrency)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    active_s = time.perf_counter() - t_start
    if errors:
        raise errors[0]
    if not overall:
        raise EmptyRunError("no requests completed against the remote server")

    with httpx.Client(base_url=base_url, timeout=10.0) as client:
        remote = client.get("/metrics").json()
    return RunReport(
        scenario=spec.scenario.value,
        cache=ablation.cache,
        mem_opt=ablation.mem_opt,
        routing=ablation.routing,
        throughput_pairs_per_s=pairs / active_s,
        overall_ms_mean=sum(overall) / len(overall),
        overall_ms_p99=percentile(overall, 0.99),
        compute_ms_mean=sum(compute) / len(compute),
        compute_ms_p99=percentile(compute, 0.99),
        cache_hit_rate=remote["cache"]["hit_rate"],
        network_bytes=remote["network_bytes"],
        steady_state_allocs=remote["steady_state_allocs"],
    )


def _row_values(report: RunReport) -> list[str]:
    return [
        report.scenario,
        "on" if report.cache else "off",
        "on" if report.mem_opt else "off",
        report.routing,
        repr(report.throughput_pairs_per_s),
        repr(report.overall_ms_mean),
        repr(report.overall_ms_p99),
        repr(report.compute_ms_mean),
        repr(report.compute_ms_p99),
        repr(report.cache_hit_rate),
        str(report.network_bytes),
        str(report.steady_state_allocs),
    ]


def emit_report(report: RunReport, path: str | Path) -> None:
    """Write the report as CSV (fixed header) and print a one-line summary."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        writer.writerow(_row_values(report))
    print(
        f"{report.scenario} cache={'on' if report.cache else 'off'} "
        f"mem_opt={'on' if report.mem_opt else 'off'} routing={report.routing}: "
        f"{report.throughput_pairs_per_s:.1f} pairs/s, "
        f"overall {report.overall_ms_mean:.2f} ms (p99 {report.overall_ms_p99:.2f}), "
        f"compute {report.compute_ms_mean:.2f} ms (p99 {report.compute_ms_p99:.2f}), "
        f"hit rate {report.cache_hit_rate:.2%}, net {report.network_bytes} B, "
        f"allocs {report.steady_state_allocs}"
    )


def load_report(path: str | Path) -> RunReport:
    """Parse a CSV written by emit_report back into a RunReport."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) != 2 or rows[0] != CSV_HEADER.split(","):
        raise ValueError(f"{path} is not a single-run report file")
    r = rows[1]
    return RunReport(
        scenario=r[0],
        cache=r[1] == "on",
        mem_opt=r[2] == "on",
        routing=r[3],
        throughput_pairs_per_s=float(r[4]),
        overall_ms_mean=float(r[5]),
        overall_ms_p99=float(r[6]),
        compute_ms_mean=float(r[7]),
        compute_ms_p99=float(r[8]),
        cache_hit_rate=float(r[9]),
        network_bytes=int(r[10]),
        steady_state_allocs=int(r[11]),
    )
