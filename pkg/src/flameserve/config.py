"""Service configuration: one JSON file aggregating every module's knobs."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .cache import CacheConfig
from .model import ModelConfig
from .store import RemoteStoreConfig
from .transfer import BandwidthTable

ROUTINGS = ("explicit", "implicit")


@dataclass(frozen=True)
class OrchestratorConfig:
    profile_shapes: tuple[int, ...] = (128, 256, 512, 1024)
    executors_per_shape: int = 2
    routing: str = "explicit"

    def __post_init__(self) -> None:
        if self.routing not in ROUTINGS:
            raise ValueError(f"routing must be one of {ROUTINGS}, got {self.routing!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "OrchestratorConfig":
        kwargs = {}
        if "profile_shapes" in d:
            kwargs["profile_shapes"] = tuple(int(s) for s in d["profile_shapes"])
        if "executors_per_shape" in d:
            kwargs["executors_per_shape"] = int(d["executors_per_shape"])
        if "routing" in d:
            kwargs["routing"] = str(d["routing"])
        return cls(**kwargs)


_DEFAULT_MODEL = ModelConfig(
    hidden_dim=16,
    head_dim=8,
    num_blocks=2,
    layers_per_block=1,
    ffn_dim=32,
    num_tasks=2,
    max_history_len=1024,
    max_candidates=2048,
    seed=7,
)


@dataclass(frozen=True)
class ServiceConfig:
    model: ModelConfig = _DEFAULT_MODEL
    cache: CacheConfig = CacheConfig()
    remote_store: RemoteStoreConfig = RemoteStoreConfig()
    bandwidth: BandwidthTable = BandwidthTable()
    orchestrator: OrchestratorConfig = OrchestratorConfig()
    listen_addr: str = "127.0.0.1:8080"
    max_concurrency: int = 16
    cache_enabled: bool = True
    mem_opt: bool = True
    attention_impl: str = "fused"
    params_path: str | None = None

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceConfig":
        kwargs = {}
        if "model" in d:
            kwargs["model"] = ModelConfig.from_dict(d["model"])
        if "cache" in d:
            kwargs["cache"] = CacheConfig.from_dict(d["cache"])
        if "remote_store" in d:
            kwargs["remote_store"] = RemoteStoreConfig.from_dict(d["remote_store"])
        if "bandwidth" in d:
            kwargs["bandwidth"] = BandwidthTable.from_dict(d["bandwidth"])
        if "orchestrator" in d:
            kwargs["orchestrator"] = OrchestratorConfig.from_dict(d["orchestrator"])
        for name in ("listen_addr", "attention_impl", "params_path"):
            if name in d:
                kwargs[name] = d[name]
        for name in ("cache_enabled", "mem_opt"):
            if name in d:
                kwargs[name] = bool(d[name])
        if "max_concurrency" in d:
            kwargs["max_concurrency"] = int(d["max_concurrency"])
        return cls(**kwargs)

    def with_ablation(self, cache: bool, mem_opt: bool, routing: str) -> "ServiceConfig":
        return replace(
            self,
            cache_enabled=cache,
            mem_opt=mem_opt,
            orchestrator=replace(self.orchestrator, routing=routing),
        )

    @property
    def host(self) -> str:
        return self.listen_addr.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_addr.rsplit(":", 1)[1])


def load_service_config(path: str | Path) -> ServiceConfig:
    with open(path) as fh:
        return ServiceConfig.from_dict(json.load(fh))
