"""Model parameters: deterministic initialization and flat binary serialization.

The on-disk format is a little-endian header -- magic ``FLMP``, format
version as u32, the nine config fields as u32s (the 64-bit seed is stored as
two u32 words, low then high) -- followed by every weight array in
declaration order as float64. Declaration order is exactly the order
``iter_param_arrays`` yields.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .config import ModelConfig

_MAGIC = b"FLMP"
_VERSION = 1
_INIT_SCALE = 0.1


@dataclass
class LayerParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class BlockParams:
    layers: list[LayerParams]
    temperature: float
    gate_weight: np.ndarray
    gate_bias: np.ndarray


@dataclass
class ModelParams:
    blocks: list[BlockParams]
    expert_w1: np.ndarray
    expert_b1: np.ndarray
    expert_w2: np.ndarray
    expert_b2: np.ndarray


def _layer_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, f = config.hidden_dim, config.ffn_dim
    return [
        ("w_q", (d, d)),
        ("w_k", (d, d)),
        ("w_v", (d, d)),
        ("w_o", (d, d)),
        ("ln1_scale", (d,)),
        ("ln1_shift", (d,)),
        ("ln2_scale", (d,)),
        ("ln2_shift", (d,)),
        ("w1", (d, f)),
        ("b1", (f,)),
        ("w2", (f, d)),
        ("b2", (d,)),
    ]


def init_params(config: ModelConfig) -> ModelParams:
    """Draw all weights uniformly from [-0.1, 0.1] with a seed-determined stream.

    Temperatures are initialized to 1.0 and are not drawn, so the stream (and
    therefore the serialized bytes) depends only on the config.
    """
    rng = np.random.default_rng(config.seed)

    def draw(shape: tuple[int, ...]) -> np.ndarray:
        return rng.uniform(-_INIT_SCALE, _INIT_SCALE, shape)

    d, f = config.hidden_dim, config.ffn_dim
    blocks = []
    for _ in range(config.num_blocks):
        layers = [
            LayerParams(**{name: draw(shape) for name, shape in _layer_shapes(config)})
            for _ in range(config.layers_per_block)
        ]
        blocks.append(
            BlockParams(
                layers=layers,
                temperature=1.0,
                gate_weight=draw((d,)),
                gate_bias=draw((d,)),
            )
        )
    return ModelParams(
        blocks=blocks,
        expert_w1=draw((d, f)),
        expert_b1=draw((f,)),
        expert_w2=draw((f, config.num_tasks)),
        expert_b2=draw((config.num_tasks,)),
    )


def iter_param_arrays(params: ModelParams) -> Iterator[tuple[str, np.ndarray]]:
    """Walk every parameter array in declaration (= serialization) order."""
    for bi, block in enumerate(params.blocks):
        for li, layer in enumerate(block.layers):
            for name in (
                "w_q", "w_k", "w_v", "w_o",
                "ln1_scale", "ln1_shift", "ln2_scale", "ln2_shift",
                "w1", "b1", "w2", "b2",
            ):
                yield f"blocks[{bi}].layers[{li}].{name}", getattr(layer, name)
        yield f"blocks[{bi}].temperature", np.array([block.temperature])
        yield f"blocks[{bi}].gate_weight", block.gate_weight
        yield f"blocks[{bi}].gate_bias", block.gate_bias
    yield "expert_w1", params.expert_w1
    yield "expert_b1", params.expert_b1
    yield "expert_w2", params.expert_w2
    yield "expert_b2", params.expert_b2


def params_to_bytes(params: ModelParams, config: ModelConfig) -> bytes:
    head = _MAGIC + struct.pack(
        "<11I",
        _VERSION,
        config.hidden_dim,
        config.head_dim,
        config.num_blocks,
        config.layers_per_block,
        config.ffn_dim,
        config.num_tasks,
        config.max_history_len,
        config.max_candidates,
        config.seed & 0xFFFFFFFF,
        config.seed >> 32,
    )
    body = b"".join(arr.astype("<f8").tobytes() for _, arr in iter_param_arrays(params))
    return head + body


def save_params(params: ModelParams, config: ModelConfig, path: str | Path) -> None:
    Path(path).write_bytes(params_to_bytes(params, config))


def load_params(path: str | Path) -> tuple[ModelConfig, ModelParams]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a model parameter file (bad magic)")
    fields = struct.unpack_from("<11I", raw, 4)
    if fields[0] != _VERSION:
        raise ValueError(f"unsupported parameter file version {fields[0]}")
    config = ModelConfig(
        hidden_dim=fields[1],
        head_dim=fields[2],
        num_blocks=fields[3],
        layers_per_block=fields[4],
        ffn_dim=fields[5],
        num_tasks=fields[6],
        max_history_len=fields[7],
        max_candidates=fields[8],
        seed=fields[9] | (fields[10] << 32),
    )

    offset = 4 + 11 * 4

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return arr.reshape(shape).copy()

    d, f = config.hidden_dim, config.ffn_dim
    blocks = []
    for _ in range(config.num_blocks):
        layers = [
            LayerParams(**{name: take(shape) for name, shape in _layer_shapes(config)})
            for _ in range(config.layers_per_block)
        ]
        temperature = float(take((1,))[0])
        blocks.append(
            BlockParams(
                layers=layers,
                temperature=temperature,
                gate_weight=take((d,)),
                gate_bias=take((d,)),
            )
        )
    params = ModelParams(
        blocks=blocks,
        expert_w1=take((d, f)),
        expert_b1=take((f,)),
        expert_w2=take((f, config.num_tasks)),
        expert_b2=take((config.num_tasks,)),
    )
    if offset != len(raw):
        raise ValueError(f"trailing bytes in parameter file ({len(raw) - offset})")
    return config, params
