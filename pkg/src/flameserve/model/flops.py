"""Closed-form scalar-operation counts for one forward pass.

Counting convention (the contract an instrumented scalar implementation must
reproduce exactly):

* A multiply costs 1, an add or subtract costs 1. A sum of n terms costs
  n - 1 adds (no zero-initialization add).
* An (m, k) x (k, n) product costs m * n * (2k - 1); adding a bias to an
  (m, n) matrix costs m * n.
* Division, square root, comparison, and unary nonlinearities (gelu,
  sigmoid, tanh) are not counted. Per-layer scalar setup such as
  1 / (temperature * sqrt(head_dim)) is not counted.
* Softmax per row over A allowed scores: subtracting the row max costs A
  adds and accumulating the normalizer costs A - 1 adds, both tallied under
  ``attention``; the A exponentials and A divisions are tallied, one count
  each, under the informational ``softmax`` bucket instead of the dominant
  count.
* Attention per allowed (row, key) pair and head: a head_dim-wide dot
  (head_dim muls, head_dim - 1 adds) plus one scaling mul; the value
  aggregation costs head_dim muls per pair and (A_row - 1) * head_dim adds
  per row.
* Layer norm per row of width d: d - 1 adds (mean sum), d subtracts
  (deviations), d muls + d - 1 adds (variance sum), 1 add (epsilon), then
  2d muls + d adds for scale-and-shift: 7d - 1 in total.
* Residual adds are tallied with their sublayer (attention or ffn).

Buckets: attention, softmax, projections, layer_norm, ffn, fusion, experts.
``total`` is the sum of all buckets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import ModelConfig

BUCKETS = ("attention", "softmax", "projections", "layer_norm", "ffn", "fusion", "experts")


@dataclass(frozen=True)
class FlopsEstimate:
    total: int
    breakdown: dict[str, int]


def matmul_flops(m: int, k: int, n: int) -> int:
    """Scalar ops for an (m, k) x (k, n) product under the mul+add convention."""
    if min(m, k, n) == 0:
        return 0
    return m * n * (2 * k - 1)


def allowed_pairs(hist_len: int, cand_count: int) -> int:
    """Allowed (row, key) pairs in the history/candidate permission mask."""
    return hist_len * (hist_len + 1) // 2 + cand_count * (hist_len + 1)


def estimate_flops(config: ModelConfig, hist_len: int, cand_count: int) -> FlopsEstimate:
    """Count scalar ops of one forward pass over the given request shape."""
    if hist_len < 0 or cand_count < 0:
        raise ValueError("hist_len and cand_count must be non-negative")
    if hist_len % config.num_blocks != 0:
        raise ValueError(
            f"hist_len {hist_len} is not divisible by num_blocks {config.num_blocks}"
        )
    d = config.hidden_dim
    dh = config.head_dim
    nh = config.num_heads
    f = config.ffn_dim
    tasks = config.num_tasks
    nb = config.num_blocks
    layers = config.layers_per_block

    hb = hist_len // nb
    c = cand_count
    t = hb + c
    a = allowed_pairs(hb, c)

    ln_per_layer = 2 * t * (7 * d - 1)
    proj_per_layer = 4 * matmul_flops(t, d, d)
    attn_muls = nh * (a * dh + a + a * dh)
    attn_adds = nh * (a * (dh - 1) + a + (a - t) + (a - t) * dh)
    attn_per_layer = attn_muls + attn_adds + t * d  # + residual
    softmax_per_layer = nh * 2 * a
    ffn_per_layer = (
        matmul_flops(t, d, f) + t * f + matmul_flops(t, f, d) + t * d + t * d
    )

    scale = nb * layers
    breakdown = {
        "attention": scale * attn_per_layer,
        "softmax": scale * softmax_per_layer,
        "projections": scale * proj_per_layer,
        "layer_norm": scale * ln_per_layer,
        "ffn": scale * ffn_per_layer,
        "fusion": nb * 3 * c * d + (nb - 1) * c * d,
        "experts": (
            matmul_flops(c, d, f) + c * f + matmul_flops(c, f, tasks) + c * tasks
        ),
    }
    return FlopsEstimate(total=sum(breakdown.values()), breakdown=breakdown)
