"""End-to-end request pipeline: parse, feature query, pack, modeled transfer,
orchestrated compute, response.

Item ids resolve to embeddings through the feature cache (empty results map
to a zero embedding, so a request never fails on a cold cache). Inputs are
packed and both transfer variants are modeled per request; the configured
variant's time is added to the recorded overall latency. Overall latency
spans request entry to response assembly; compute latency covers only the
bound model execution.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .cache import CacheMode, FeatureCache, FeatureKey, KeyKind, QueryStats
from .config import ServiceConfig
from .metrics import MetricsRegistry, percentile
from .model import ModelParams, init_params, load_params
from .orchestrator import ExecutorPool, ImplicitShapeRunner, ProfileSet
from .store import SimulatedRemoteStore, decode_embedding
from .transfer import TransferMode, pack_inputs, simulate_transfer


class RequestError(ValueError):
    """The request violates the wire contract; maps to a 400-class response."""


class ServiceClosedError(RuntimeError):
    """The service is draining or shut down."""


@dataclass(frozen=True)
class ScoreRequest:
    user_id: int
    history_item_ids: np.ndarray
    candidate_item_ids: np.ndarray
    context: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScoreResponse:
    scores: np.ndarray  # (C, num_tasks)
    overall_latency_ms: float
    compute_latency_ms: float


class Service:
    """Owns the cache, store, router, and metrics for one model deployment."""

    def __init__(self, config: ServiceConfig, store: SimulatedRemoteStore | None = None) -> None:
        self.config = config
        if config.params_path:
            loaded_config, params = load_params(config.params_path)
            if loaded_config != config.model:
                raise ValueError(
                    f"parameter file config {loaded_config} does not match service model config"
                )
            self.params: ModelParams = params
        else:
            self.params = init_params(config.model)
        self.store = store or SimulatedRemoteStore(config.remote_store, config.model.hidden_dim)
        self.cache = FeatureCache(config.cache, self.store)
        if config.orchestrator.routing == "explicit":
            profiles = ProfileSet(
                shapes=config.orchestrator.profile_shapes,
                executors_per_shape=config.orchestrator.executors_per_shape,
            )
            self.runner = ExecutorPool(
                profiles, self.params, config.model, attn_impl=config.attention_impl
            )
        else:
            self.runner = ImplicitShapeRunner(
                self.params, config.model, attn_impl=config.attention_impl
            )
        self.registry = MetricsRegistry()
        self._concurrency = threading.Semaphore(config.max_concurrency)
        self._inflight = 0
        self._inflight_lock = threading.Lock()
        self._drained = threading.Condition(self._inflight_lock)
        self._closed = False

    # -- feature path ---------------------------------------------------------

    def _lookup(self, key: FeatureKey) -> bytes:
        if not self.config.cache_enabled:
            return self.store.fetch(key)
        if self.config.cache.mode is CacheMode.ASYNC:
            return self.cache.get_async(key).value
        return self.cache.get_sync(key)

    def resolve_embeddings(self, item_ids: np.ndarray) -> np.ndarray:
        """Map item ids to embedding rows; unknown/empty features become zeros."""
        dim = self.config.model.hidden_dim
        if item_ids.size == 0:
            return np.zeros((0, dim))
        unique, inverse = np.unique(item_ids, return_inverse=True)
        table = np.zeros((unique.size, dim))
        for row, item_id in enumerate(unique):
            value = self._lookup(FeatureKey(KeyKind.ITEM, int(item_id)))
            if value:
                table[row] = decode_embedding(value, dim)
        return table[inverse]

    # -- request path ---------------------------------------------------------

    def _validate(self, req: ScoreRequest) -> None:
        model = self.config.model
        c = len(req.candidate_item_ids)
        h = len(req.history_item_ids)
        if c < 1:
            raise RequestError("candidates must be non-empty")
        if c > model.max_candidates:
            raise RequestError(f"candidate count {c} exceeds max {model.max_candidates}")
        if h > model.max_history_len:
            raise RequestError(f"history length {h} exceeds max {model.max_history_len}")
        if h % model.num_blocks != 0:
            raise RequestError(
                f"history length {h} must be a multiple of num_blocks {model.num_blocks}"
            )

    def handle_request(self, req: ScoreRequest) -> ScoreResponse:
        t0 = time.perf_counter()
        self._validate(req)
        with self._inflight_lock:
            if self._closed:
                raise ServiceClosedError("service is shut down")
            self._inflight += 1
        try:
            with self._concurrency:
                history = self.resolve_embeddings(np.asarray(req.history_item_ids))
                candidates = self.resolve_embeddings(np.asarray(req.candidate_item_ids))

                segments = [
                    ("history", history.tobytes()),
                    ("candidates", candidates.tobytes()),
                    ("context", json.dumps(req.context, sort_keys=True).encode()),
                ]
                packed = pack_inputs(segments)
                pinned_s = simulate_transfer(
                    packed, TransferMode.PINNED, self.config.bandwidth
                ).modeled_time_s
                pageable_s = sum(
                    simulate_transfer(
                        pack_inputs([seg]), TransferMode.PAGEABLE, self.config.bandwidth
                    ).modeled_time_s
                    for seg in segments
                )
                transfer_s = pinned_s if self.config.mem_opt else pageable_s

                result = self.runner.execute(history, candidates)

            overall_ms = ((time.perf_counter() - t0) + transfer_s) * 1000.0
            compute_ms = result.compute_s * 1000.0
            self.registry.record_request(
                overall_ms=overall_ms,
                compute_ms=compute_ms,
                pairs=len(req.candidate_item_ids),
                transfer_pinned_s=pinned_s,
                transfer_pageable_s=pageable_s,
            )
            return ScoreResponse(result.scores, overall_ms, compute_ms)
        finally:
            with self._inflight_lock:
                self._inflight -= 1
                self._drained.notify_all()

    # -- observability / lifecycle --------------------------------------------

    def cache_stats(self) -> QueryStats:
        return self.cache.stats()

    def metrics_snapshot(self) -> dict:
        snap = self.registry.snapshot()
        stats = self.cache_stats()
        lookups = stats.hits_fresh + stats.hits_stale + stats.misses

        def summary(series: tuple[float, ...]) -> dict:
            if not series:
                return {"count": 0}
            values = list(series)
            return {
                "count": len(values),
                "mean": sum(values) / len(values),
                "p50": percentile(values, 0.5),
                "p99": percentile(values, 0.99),
            }

        return {
            "requests_total": snap.requests_total,
            "pairs_processed": snap.pairs_processed,
            "overall_ms": summary(snap.overall_ms),
            "compute_ms": summary(snap.compute_ms),
            "cache": {
                "hits_fresh": stats.hits_fresh,
                "hits_stale": stats.hits_stale,
                "misses": stats.misses,
                "remote_queries": stats.remote_queries,
                "bytes_fetched": stats.bytes_fetched,
                "hit_rate": (stats.hits_fresh + stats.hits_stale) / lookups if lookups else 0.0,
            },
            "network_bytes": self.store.bytes_served,
            "steady_state_allocs": self.runner.steady_state_allocations,
        }

    def close(self, drain_timeout_s: float = 30.0) -> None:
        """Stop accepting requests, wait for in-flight ones, release resources."""
        with self._inflight_lock:
            self._closed = True
            deadline = time.monotonic() + drain_timeout_s
            while self._inflight > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"{self._inflight} requests still in flight")
                self._drained.wait(timeout=remaining)
        self.runner.shutdown()
        self.cache.close()
