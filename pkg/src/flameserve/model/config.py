"""Model dimensions shared by the forward pass, the executors, and the bench."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int
    head_dim: int
    num_blocks: int
    layers_per_block: int
    ffn_dim: int
    num_tasks: int
    max_history_len: int
    max_candidates: int
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "hidden_dim",
            "head_dim",
            "num_blocks",
            "layers_per_block",
            "ffn_dim",
            "num_tasks",
            "max_history_len",
            "max_candidates",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_dim % self.head_dim != 0:
            raise ValueError(
                f"head_dim {self.head_dim} must divide hidden_dim {self.hidden_dim}"
            )
        if self.max_history_len % self.num_blocks != 0:
            raise ValueError(
                f"num_blocks {self.num_blocks} must divide max_history_len {self.max_history_len}"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def num_heads(self) -> int:
        return self.hidden_dim // self.head_dim

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: int(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "head_dim": self.head_dim,
            "num_blocks": self.num_blocks,
            "layers_per_block": self.layers_per_block,
            "ffn_dim": self.ffn_dim,
            "num_tasks": self.num_tasks,
            "max_history_len": self.max_history_len,
            "max_candidates": self.max_candidates,
            "seed": self.seed,
        }
