"""Simulated remote feature store.

Values are derived deterministically from (store seed, key, key version), so
any id is resolvable and runs are reproducible. Each value carries a
little-endian float64 embedding followed by side-information filler up to the
configured response size. A mutate hook bumps a key's version so staleness is
observable. Latency is drawn from a lognormal fitted to the configured mean
and p99 and slept only when positive.
"""

from __future__ import annotations

import math
import threading
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .cache import FeatureKey, splitmix64

_Z99 = 2.3263478740408408  # standard normal 99th percentile


@dataclass(frozen=True)
class RemoteStoreConfig:
    latency_ms_mean: float = 2.0
    latency_ms_p99: float = 10.0
    bytes_per_value: int = 512
    seed: int = 1234

    def __post_init__(self) -> None:
        if self.latency_ms_mean < 0 or self.latency_ms_p99 < 0:
            raise ValueError("latencies must be non-negative")
        if self.bytes_per_value < 0:
            raise ValueError("bytes_per_value must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "RemoteStoreConfig":
        return cls(
            latency_ms_mean=float(d.get("latency_ms_mean", cls.latency_ms_mean)),
            latency_ms_p99=float(d.get("latency_ms_p99", cls.latency_ms_p99)),
            bytes_per_value=int(d.get("bytes_per_value", cls.bytes_per_value)),
            seed=int(d.get("seed", cls.seed)),
        )


def _lognormal_params(mean: float, p99: float) -> tuple[float, float] | None:
    """(mu, sigma) of a lognormal with the given mean and p99, if one exists."""
    if mean <= 0 or p99 <= mean:
        return None
    disc = _Z99 * _Z99 - 2.0 * math.log(p99 / mean)
    if disc < 0:
        return None
    sigma = _Z99 - math.sqrt(disc)
    return math.log(mean) - 0.5 * sigma * sigma, sigma


def item_embedding(seed: int, key: FeatureKey, version: int, dim: int) -> np.ndarray:
    """Deterministic embedding for (seed, key, version), uniform in [-1, 1)."""
    mix = splitmix64(seed ^ splitmix64(key.stable_hash() ^ splitmix64(version)))
    rng = np.random.default_rng(mix)
    return rng.uniform(-1.0, 1.0, dim)


def encode_feature_value(embedding: np.ndarray, bytes_per_value: int) -> bytes:
    """Embedding as little-endian float64 plus filler up to bytes_per_value."""
    raw = embedding.astype("<f8").tobytes()
    if len(raw) < bytes_per_value:
        raw += b"\x00" * (bytes_per_value - len(raw))
    return raw


def decode_embedding(value: bytes, dim: int) -> np.ndarray:
    """Inverse of encode_feature_value; empty values decode to a zero embedding."""
    if len(value) < dim * 8:
        return np.zeros(dim)
    return np.frombuffer(value[: dim * 8], dtype="<f8").copy()


class SimulatedRemoteStore:
    """Deterministic feature store with modeled latency and fetch instrumentation.

    ``max_concurrent_fetches`` records, per key, the highest number of fetches
    that were ever in flight simultaneously; single-flight callers should
    never drive it above 1.
    """

    def __init__(self, config: RemoteStoreConfig, embedding_dim: int) -> None:
        self.config = config
        self.embedding_dim = embedding_dim
        self._versions: dict[FeatureKey, int] = {}
        self._lock = threading.Lock()
        self._rng = np.random.default_rng(splitmix64(config.seed ^ 0xA5A5A5A5))
        self._lognormal = _lognormal_params(config.latency_ms_mean, config.latency_ms_p99)
        self._abort = threading.Event()
        self.fetch_calls = 0
        self.bytes_served = 0
        self._in_flight: dict[FeatureKey, int] = defaultdict(int)
        self.max_concurrent_fetches: dict[FeatureKey, int] = defaultdict(int)

    def version_of(self, key: FeatureKey) -> int:
        with self._lock:
            return self._versions.get(key, 0)

    def mutate(self, key: FeatureKey) -> None:
        """Advance the key's version so subsequent fetches return new features."""
        with self._lock:
            self._versions[key] = self._versions.get(key, 0) + 1

    def value_for(self, key: FeatureKey, version: int | None = None) -> bytes:
        if version is None:
            version = self.version_of(key)
        emb = item_embedding(self.config.seed, key, version, self.embedding_dim)
        return encode_feature_value(emb, self.config.bytes_per_value)

    def _sample_latency_s(self) -> float:
        if self.config.latency_ms_mean <= 0:
            return 0.0
        with self._lock:
            if self._lognormal is None:
                return self.config.latency_ms_mean / 1000.0
            mu, sigma = self._lognormal
            return float(self._rng.lognormal(mu, sigma)) / 1000.0

    def fetch(self, key: FeatureKey) -> bytes:
        with self._lock:
            self.fetch_calls += 1
            self._in_flight[key] += 1
            if self._in_flight[key] > self.max_concurrent_fetches[key]:
                self.max_concurrent_fetches[key] = self._in_flight[key]
        try:
            latency = self._sample_latency_s()
            if latency > 0:
                self._abort.wait(latency)
            value = self.value_for(key)
        finally:
            with self._lock:
                self._in_flight[key] -= 1
        with self._lock:
            self.bytes_served += len(value)
        return value

    def abort_sleeps(self) -> None:
        """Cut all pending and future latency sleeps short (teardown aid)."""
        self._abort.set()
