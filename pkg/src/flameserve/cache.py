"""Feature-query engine: bucketed LRU cache with TTL over a remote store.

Two query modes:

* async -- never waits on the store. Fresh entries are returned directly;
  stale or absent entries return immediately (stale value or empty) while a
  single background refresh per key is scheduled.
* sync  -- fresh entries are returned directly; stale or absent entries block
  on a fetch, so returned values are always younger than the TTL. Concurrent
  fetches for one key are coalesced behind a leader.

Keys hash to buckets with a process-independent 64-bit mix so bucket
assignment is reproducible run to run. Each bucket holds its own lock and
LRU order, so traffic to distinct buckets never contends.
"""

from __future__ import annotations

import functools
import logging
import threading
import time
from collections import OrderedDict
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Protocol

logger = logging.getLogger(__name__)

#: Cached value meaning "the store knows nothing about this key".
EMPTY_VALUE = b""


class KeyKind(Enum):
    USER = "user"
    ITEM = "item"


_KIND_SALT = {KeyKind.USER: 0x9E3779B97F4A7C15, KeyKind.ITEM: 0xC2B2AE3D27D4EB4F}


def splitmix64(x: int) -> int:
    """Finalizer of the splitmix64 generator; a stable 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class FeatureKey:
    kind: KeyKind
    id: int

    def __post_init__(self) -> None:
        # Hot path: keys are hashed several times per cache lookup, and the
        # process-independent mix doubles as the dict hash.
        object.__setattr__(self, "_hash", splitmix64(self.id ^ _KIND_SALT[self.kind]))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, FeatureKey)
            and self.id == other.id
            and self.kind is other.kind
        )

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    def __lt__(self, other: "FeatureKey") -> bool:
        return (self.kind.value, self.id) < (other.kind.value, other.id)

    def stable_hash(self) -> int:
        return self._hash  # type: ignore[attr-defined]


class Freshness(Enum):
    FRESH = "fresh"
    STALE = "stale"
    EMPTY = "empty"


class QueryOutcome(NamedTuple):
    status: Freshness
    value: bytes


@dataclass
class CacheEntry:
    value: bytes
    written_at: float
    ttl: float
    refresh_in_flight: bool = False

    def is_fresh(self, now: float) -> bool:
        return now - self.written_at < self.ttl


class CacheMode(Enum):
    ASYNC = "async"
    SYNC = "sync"


@dataclass(frozen=True)
class CacheConfig:
    bucket_count: int = 64
    capacity_per_bucket: int = 1024
    ttl_s: float = 5.0
    mode: CacheMode = CacheMode.ASYNC
    cache_user_keys: bool = False
    refresh_workers: int = 8

    def __post_init__(self) -> None:
        if self.bucket_count < 1 or self.bucket_count & (self.bucket_count - 1):
            raise ValueError("bucket_count must be a positive power of two")
        if self.capacity_per_bucket < 1:
            raise ValueError("capacity_per_bucket must be >= 1")
        if self.ttl_s <= 0:
            raise ValueError("ttl_s must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "CacheConfig":
        kwargs = {}
        if "bucket_count" in d:
            kwargs["bucket_count"] = int(d["bucket_count"])
        if "capacity_per_bucket" in d:
            kwargs["capacity_per_bucket"] = int(d["capacity_per_bucket"])
        if "ttl_ms" in d:
            kwargs["ttl_s"] = float(d["ttl_ms"]) / 1000.0
        if "mode" in d:
            kwargs["mode"] = CacheMode(d["mode"])
        if "cache_user_keys" in d:
            kwargs["cache_user_keys"] = bool(d["cache_user_keys"])
        if "refresh_workers" in d:
            kwargs["refresh_workers"] = int(d["refresh_workers"])
        return cls(**kwargs)


@dataclass
class QueryStats:
    hits_fresh: int = 0
    hits_stale: int = 0
    misses: int = 0
    remote_queries: int = 0
    bytes_fetched: int = 0


class RemoteStore(Protocol):
    def fetch(self, key: FeatureKey) -> bytes: ...


class _Bucket:
    __slots__ = ("lock", "entries", "refreshing", "sync_flights",
                 "hits_fresh", "hits_stale", "misses")

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.entries: OrderedDict[FeatureKey, CacheEntry] = OrderedDict()
        self.refreshing: set[FeatureKey] = set()
        self.sync_flights: dict[FeatureKey, Future] = {}
        # Lookup counters live per bucket so the hot path never takes a
        # second lock; stats() aggregates them.
        self.hits_fresh = 0
        self.hits_stale = 0
        self.misses = 0


class FeatureCache:
    """Sharded LRU with TTL and stale-while-revalidate over a RemoteStore."""

    def __init__(
        self,
        config: CacheConfig,
        store: RemoteStore,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config
        self.store = store
        self.clock = clock
        self._buckets = [_Bucket() for _ in range(config.bucket_count)]
        self._remote_queries = 0
        self._bytes_fetched = 0
        self._stats_lock = threading.Lock()
        self._refresh_pool = ThreadPoolExecutor(
            max_workers=config.refresh_workers, thread_name_prefix="cache-refresh"
        )
        self._outstanding: set[Future] = set()
        self._outstanding_lock = threading.Lock()
        self._closed = False

    def _bucket_for(self, key: FeatureKey) -> _Bucket:
        return self._buckets[key.stable_hash() % self.config.bucket_count]

    def _fetch(self, key: FeatureKey) -> bytes:
        with self._stats_lock:
            self._remote_queries += 1
        value = self.store.fetch(key)
        with self._stats_lock:
            self._bytes_fetched += len(value)
        return value

    def _bypassed(self, key: FeatureKey) -> bool:
        return key.kind is KeyKind.USER and not self.config.cache_user_keys

    # -- async mode ---------------------------------------------------------

    def get_async(self, key: FeatureKey) -> QueryOutcome:
        """Return immediately; stale or absent entries trigger one background refresh."""
        if self.config.mode is not CacheMode.ASYNC:
            raise RuntimeError("cache is not in async mode")
        if self._bypassed(key):
            return QueryOutcome(Freshness.FRESH, self._fetch(key))
        bucket = self._bucket_for(key)
        schedule = False
        with bucket.lock:
            entry = bucket.entries.get(key)
            now = self.clock()
            if entry is not None and entry.is_fresh(now):
                bucket.hits_fresh += 1
                bucket.entries.move_to_end(key)
                return QueryOutcome(Freshness.FRESH, entry.value)
            if entry is not None:
                bucket.hits_stale += 1
                bucket.entries.move_to_end(key)
                outcome = QueryOutcome(Freshness.STALE, entry.value)
            else:
                bucket.misses += 1
                outcome = QueryOutcome(Freshness.EMPTY, EMPTY_VALUE)
            if key not in bucket.refreshing:
                bucket.refreshing.add(key)
                if entry is not None:
                    entry.refresh_in_flight = True
                schedule = True
        if schedule:
            self._submit_refresh(key)
        return outcome

    def _submit_refresh(self, key: FeatureKey) -> None:
        fut = self._refresh_pool.submit(self._refresh, key)
        with self._outstanding_lock:
            self._outstanding.add(fut)
        fut.add_done_callback(self._discard_outstanding)

    def _discard_outstanding(self, fut: Future) -> None:
        with self._outstanding_lock:
            self._outstanding.discard(fut)

    def _refresh(self, key: FeatureKey) -> None:
        bucket = self._bucket_for(key)
        try:
            value = self._fetch(key)
        except Exception:
            logger.warning("background refresh failed for %s", key, exc_info=True)
            with bucket.lock:
                bucket.refreshing.discard(key)
                entry = bucket.entries.get(key)
                if entry is not None:
                    entry.refresh_in_flight = False
            return
        with bucket.lock:
            self._store_locked(bucket, key, value)
            bucket.refreshing.discard(key)

    # -- sync mode ----------------------------------------------------------

    def get_sync(self, key: FeatureKey) -> bytes:
        """Return a value younger than the TTL, fetching (once per key) if needed."""
        if self.config.mode is not CacheMode.SYNC:
            raise RuntimeError("cache is not in sync mode")
        if self._bypassed(key):
            return self._fetch(key)
        bucket = self._bucket_for(key)
        with bucket.lock:
            entry = bucket.entries.get(key)
            now = self.clock()
            if entry is not None and entry.is_fresh(now):
                bucket.hits_fresh += 1
                bucket.entries.move_to_end(key)
                return entry.value
            if entry is not None:
                bucket.hits_stale += 1
            else:
                bucket.misses += 1
            flight = bucket.sync_flights.get(key)
            leader = flight is None
            if leader:
                flight = Future()
                bucket.sync_flights[key] = flight
        if not leader:
            return flight.result()
        try:
            value = self._fetch(key)
        except BaseException as exc:
            with bucket.lock:
                bucket.sync_flights.pop(key, None)
            flight.set_exception(exc)
            raise
        with bucket.lock:
            self._store_locked(bucket, key, value)
            bucket.sync_flights.pop(key, None)
        flight.set_result(value)
        return value

    # -- shared -------------------------------------------------------------

    def put(self, key: FeatureKey, value: bytes) -> None:
        bucket = self._bucket_for(key)
        with bucket.lock:
            self._store_locked(bucket, key, value)

    def _store_locked(self, bucket: _Bucket, key: FeatureKey, value: bytes) -> None:
        bucket.entries[key] = CacheEntry(value, self.clock(), self.config.ttl_s)
        bucket.entries.move_to_end(key)
        while len(bucket.entries) > self.config.capacity_per_bucket:
            bucket.entries.popitem(last=False)

    def stats(self) -> QueryStats:
        stats = QueryStats()
        for bucket in self._buckets:
            with bucket.lock:
                stats.hits_fresh += bucket.hits_fresh
                stats.hits_stale += bucket.hits_stale
                stats.misses += bucket.misses
        with self._stats_lock:
            stats.remote_queries = self._remote_queries
            stats.bytes_fetched = self._bytes_fetched
        return stats

    def bucket_keys(self, index: int) -> list[FeatureKey]:
        """Snapshot of one bucket's keys in LRU-to-MRU order (for verification)."""
        bucket = self._buckets[index]
        with bucket.lock:
            return list(bucket.entries.keys())

    def bucket_index(self, key: FeatureKey) -> int:
        return key.stable_hash() % self.config.bucket_count

    def drain_refreshes(self, timeout_s: float = 30.0) -> None:
        """Block until all scheduled background refreshes have completed."""
        deadline = time.monotonic() + timeout_s
        while True:
            with self._outstanding_lock:
                pending = list(self._outstanding)
            if not pending:
                return
            if time.monotonic() > deadline:
                raise TimeoutError(f"{len(pending)} refreshes still in flight")
            for fut in pending:
                fut.result(timeout=max(0.0, deadline - time.monotonic()))

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._refresh_pool.shutdown(wait=True)
