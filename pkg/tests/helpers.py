"""Shared builders for service-level tests."""

from flameserve.cache import CacheConfig, CacheMode
from flameserve.config import OrchestratorConfig, ServiceConfig
from flameserve.model import ModelConfig
from flameserve.store import RemoteStoreConfig


def tiny_service_config(
    mode: CacheMode = CacheMode.SYNC,
    shapes: tuple[int, ...] = (4, 8, 16),
    routing: str = "explicit",
    **model_overrides,
) -> ServiceConfig:
    model = dict(
        hidden_dim=8,
        head_dim=4,
        num_blocks=2,
        layers_per_block=1,
        ffn_dim=12,
        num_tasks=2,
        max_history_len=64,
        max_candidates=2048,
        seed=5,
    )
    model.update(model_overrides)
    return ServiceConfig(
        model=ModelConfig(**model),
        cache=CacheConfig(bucket_count=16, capacity_per_bucket=256, ttl_s=60.0, mode=mode),
        remote_store=RemoteStoreConfig(
            latency_ms_mean=0.0, latency_ms_p99=0.0, bytes_per_value=64, seed=17
        ),
        orchestrator=OrchestratorConfig(
            profile_shapes=shapes, executors_per_shape=2, routing=routing
        ),
        max_concurrency=8,
    )
