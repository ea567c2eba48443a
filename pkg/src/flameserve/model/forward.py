"""Reference forward pass: blockwise transformer over split history, gated
fusion of block outputs, and multi-task expert heads.

The history is split into contiguous equal sub-sequences, one per block.
Each block concatenates all candidates after its sub-sequence and runs
pre-norm transformer layers under the history/candidate permission mask, so
every candidate is scored in a single pass. ``model_forward_sequential``
re-scores candidates one at a time and is the oracle the parallel pass must
match.
"""

from __future__ import annotations

import math

import numpy as np

from .attention import (
    attention_naive,
    attention_sumi,
    attention_sumi_candidates,
    attention_tiled,
)
from .config import ModelConfig
from .mask import build_sumi_mask
from .params import BlockParams, ModelParams

LN_EPS = 1e-5
DEFAULT_TILE = 128

ATTN_IMPLS = ("fused", "tiled", "naive")


def gelu(x: np.ndarray) -> np.ndarray:
    """Smooth tanh-form gelu."""
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    dev = x - mean
    var = (dev * dev).mean(axis=-1, keepdims=True)
    return dev / np.sqrt(var + LN_EPS) * scale + shift


def split_sequence(history: np.ndarray, num_blocks: int, mode: str = "contiguous") -> list[np.ndarray]:
    """Partition (length, d) history into ``num_blocks`` contiguous equal parts."""
    if num_blocks < 1:
        raise ValueError("num_blocks must be >= 1")
    if mode == "interleaved":
        raise NotImplementedError("interleaved split is reserved, only contiguous is implemented")
    if mode != "contiguous":
        raise ValueError(f"unknown split mode {mode!r}")
    length = history.shape[0]
    if length % num_blocks != 0:
        raise ValueError(f"history length {length} is not divisible by num_blocks {num_blocks}")
    step = length // num_blocks
    return [history[b * step : (b + 1) * step] for b in range(num_blocks)]


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, num_heads, d // num_heads).transpose(1, 0, 2)


def _merge_heads(xh: np.ndarray) -> np.ndarray:
    nh, t, hd = xh.shape
    return xh.transpose(1, 0, 2).reshape(t, nh * hd)


def block_forward(
    sub_seq: np.ndarray,
    candidates: np.ndarray,
    block: BlockParams,
    config: ModelConfig,
    attn_impl: str = "fused",
    tile: int = DEFAULT_TILE,
) -> np.ndarray:
    """Run one block's layer stack over [sub_seq | candidates].

    Returns the final hidden states of the candidate positions, shape (C, d).
    """
    if attn_impl not in ATTN_IMPLS:
        raise ValueError(f"attn_impl must be one of {ATTN_IMPLS}, got {attn_impl!r}")
    if sub_seq.ndim != 2 or candidates.ndim != 2:
        raise ValueError("sub_seq and candidates must be 2-d (length, hidden_dim)")
    d = config.hidden_dim
    if sub_seq.shape[1] != d or candidates.shape[1] != d:
        raise ValueError(f"embeddings must have width {d}")
    if candidates.shape[0] < 1:
        raise ValueError("candidates must be non-empty")
    if block.temperature <= 0:
        raise ValueError("block temperature must be positive")

    h = sub_seq.shape[0]
    c = candidates.shape[0]
    t = h + c
    nh = config.num_heads
    x = np.concatenate([sub_seq, candidates], axis=0)
    mask = None if attn_impl == "fused" else build_sumi_mask(h, c)

    for li, layer in enumerate(block.layers):
        if attn_impl == "fused" and li == len(block.layers) - 1:
            # Final layer: history-row updates are discarded downstream, so
            # only candidate queries, attention rows, and FFN rows are
            # computed. History keys/values still feed the candidates.
            y = layer_norm(x, layer.ln1_scale, layer.ln1_shift)
            qc = _split_heads(y[h:] @ layer.w_q, nh)
            kh = _split_heads(y @ layer.w_k, nh)
            vh = _split_heads(y @ layer.w_v, nh)
            oc = attention_sumi_candidates(qc, kh, vh, h, block.temperature)
            xc = x[h:] + _merge_heads(oc) @ layer.w_o
            y = layer_norm(xc, layer.ln2_scale, layer.ln2_shift)
            return xc + gelu(y @ layer.w1 + layer.b1) @ layer.w2 + layer.b2

        y = layer_norm(x, layer.ln1_scale, layer.ln1_shift)
        qh = _split_heads(y @ layer.w_q, nh)
        kh = _split_heads(y @ layer.w_k, nh)
        vh = _split_heads(y @ layer.w_v, nh)
        if attn_impl == "fused":
            oh = attention_sumi(qh, kh, vh, h, block.temperature)
        else:
            oh = np.empty_like(qh)
            for head in range(nh):
                if attn_impl == "tiled":
                    oh[head] = attention_tiled(
                        qh[head], kh[head], vh[head], mask, block.temperature, min(tile, t)
                    )
                else:
                    oh[head] = attention_naive(qh[head], kh[head], vh[head], mask, block.temperature)
        x = x + _merge_heads(oh) @ layer.w_o

        y = layer_norm(x, layer.ln2_scale, layer.ln2_shift)
        x = x + gelu(y @ layer.w1 + layer.b1) @ layer.w2 + layer.b2

    return x[h:]


def gated_fusion(block_outputs: list[np.ndarray], params: ModelParams) -> np.ndarray:
    """Elementwise sigmoid-gated sum of per-block candidate states."""
    if len(block_outputs) != len(params.blocks):
        raise ValueError(
            f"expected {len(params.blocks)} block outputs, got {len(block_outputs)}"
        )
    shape = block_outputs[0].shape
    for out in block_outputs[1:]:
        if out.shape != shape:
            raise ValueError("block outputs must share one shape")
    fused = np.zeros(shape, dtype=block_outputs[0].dtype)
    for out, block in zip(block_outputs, params.blocks):
        fused = fused + sigmoid(out * block.gate_weight + block.gate_bias) * out
    return fused


def expert_heads(fused: np.ndarray, params: ModelParams) -> np.ndarray:
    """Two-layer MLP per candidate followed by a logistic squash to [0, 1]."""
    if fused.ndim != 2 or fused.shape[1] != params.expert_w1.shape[0]:
        raise ValueError(
            f"fused states must be (C, {params.expert_w1.shape[0]}), got {fused.shape}"
        )
    hidden = gelu(fused @ params.expert_w1 + params.expert_b1)
    return sigmoid(hidden @ params.expert_w2 + params.expert_b2)


def _check_forward_inputs(
    history: np.ndarray, candidates: np.ndarray, config: ModelConfig
) -> None:
    if history.ndim != 2 or history.shape[1] != config.hidden_dim:
        raise ValueError(f"history must be (length, {config.hidden_dim})")
    if candidates.ndim != 2 or candidates.shape[1] != config.hidden_dim:
        raise ValueError(f"candidates must be (count, {config.hidden_dim})")
    if history.shape[0] > config.max_history_len:
        raise ValueError(
            f"history length {history.shape[0]} exceeds max {config.max_history_len}"
        )
    if not 1 <= candidates.shape[0] <= config.max_candidates:
        raise ValueError(
            f"candidate count {candidates.shape[0]} outside [1, {config.max_candidates}]"
        )


def model_forward(
    history: np.ndarray,
    candidates: np.ndarray,
    params: ModelParams,
    config: ModelConfig,
    attn_impl: str = "fused",
    tile: int = DEFAULT_TILE,
) -> np.ndarray:
    """Score all candidates against the history in one pass.

    Returns a (C, num_tasks) matrix of probabilities.
    """
    _check_forward_inputs(history, candidates, config)
    subs = split_sequence(history, config.num_blocks)
    outs = [
        block_forward(sub, candidates, block, config, attn_impl=attn_impl, tile=tile)
        for sub, block in zip(subs, params.blocks)
    ]
    return expert_heads(gated_fusion(outs, params), params)


def model_forward_sequential(
    history: np.ndarray,
    candidates: np.ndarray,
    params: ModelParams,
    config: ModelConfig,
    attn_impl: str = "naive",
) -> np.ndarray:
    """Oracle: score candidates one at a time and stack the rows.

    Defaults to the naive attention kernel so the comparison against
    ``model_forward`` crosses two independent code paths.
    """
    _check_forward_inputs(history, candidates, config)
    rows = [
        model_forward(history, candidates[i : i + 1], params, config, attn_impl=attn_impl)
        for i in range(candidates.shape[0])
    ]
    return np.concatenate(rows, axis=0)
