"""Single-head attention kernels over a permission mask.

Three implementations of the same computation, trading transparency for
speed:

* ``attention_naive``   -- fully materialized TxT scores; the oracle.
* ``attention_tiled``   -- single-pass streaming softmax over key/value tiles
                           (running max/sum rescaling); never materializes the
                           full TxT score matrix.
* ``attention_sumi``    -- heads-batched fast path that exploits the mask
                           structure directly: one causal block for history
                           rows and one history-plus-self block per candidate
                           row, skipping the candidate-candidate region
                           entirely.

All paths divide raw dot-product scores by ``temperature * sqrt(head_dim)``
and exclude masked positions from the softmax.
"""

from __future__ import annotations

import math

import numpy as np

from .mask import SumiMask


def masked_softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a score matrix whose disallowed entries are -inf.

    Every row must contain at least one finite entry.
    """
    m = scores.max(axis=-1, keepdims=True)
    w = np.exp(scores - m)
    return w / w.sum(axis=-1, keepdims=True)


def _softmax_rows_inplace(scores: np.ndarray) -> np.ndarray:
    # Same as masked_softmax_rows but overwrites its argument; the score
    # matrices here are multi-megabyte, so avoiding temporaries matters.
    m = scores.max(axis=-1, keepdims=True)
    np.subtract(scores, m, out=scores)
    np.exp(scores, out=scores)
    z = scores.sum(axis=-1, keepdims=True)
    np.divide(scores, z, out=scores)
    return scores


def _check_qkv(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: SumiMask, temperature: float) -> None:
    if q.ndim != 2 or q.shape != k.shape or q.shape != v.shape:
        raise ValueError(f"q/k/v must share one (T, head_dim) shape, got {q.shape}, {k.shape}, {v.shape}")
    if q.shape[0] != mask.size:
        raise ValueError(f"sequence length {q.shape[0]} does not match mask size {mask.size}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")


def attention_naive(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: SumiMask, temperature: float
) -> np.ndarray:
    """Reference attention: materialize all scores, mask, softmax, weight values."""
    _check_qkv(q, k, v, mask, temperature)
    if q.shape[0] == 0:
        return np.zeros_like(q)
    scale = 1.0 / (temperature * math.sqrt(q.shape[1]))
    scores = (q @ k.T) * scale
    scores = np.where(mask.allowed, scores, -np.inf)
    return masked_softmax_rows(scores) @ v


def attention_tiled(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    mask: SumiMask,
    temperature: float,
    tile: int,
) -> np.ndarray:
    """Streaming-softmax attention over key/value tiles of width ``tile``.

    Maintains a running row maximum, normalizer, and output accumulator,
    rescaling them as each tile raises the maximum. Only a (T, tile) score
    block exists at any moment.
    """
    _check_qkv(q, k, v, mask, temperature)
    t, head_dim = q.shape
    if t == 0:
        return np.zeros_like(q)
    if not 1 <= tile <= t:
        raise ValueError(f"tile must be in [1, {t}], got {tile}")
    dtype = q.dtype
    scale = 1.0 / (temperature * math.sqrt(head_dim))

    run_max = np.full(t, -np.inf, dtype=dtype)
    run_sum = np.zeros(t, dtype=dtype)
    out = np.zeros((t, head_dim), dtype=dtype)

    for start in range(0, t, tile):
        stop = min(start + tile, t)
        block = (q @ k[start:stop].T) * scale
        block = np.where(mask.allowed[:, start:stop], block, -np.inf)

        new_max = np.maximum(run_max, block.max(axis=1))
        # Rows that have seen no allowed position yet stay at -inf; keep their
        # zero state instead of evaluating exp(-inf - -inf).
        safe_max = np.where(new_max == -np.inf, 0.0, new_max)
        alpha = np.where(run_max == -np.inf, 0.0, np.exp(run_max - safe_max))
        p = np.exp(block - safe_max[:, None])

        run_sum = run_sum * alpha + p.sum(axis=1)
        out = out * alpha[:, None] + p @ v[start:stop]
        run_max = new_max

    return out / run_sum[:, None]


def attention_sumi_candidates(
    qc: np.ndarray, kh: np.ndarray, vh: np.ndarray, hist_len: int, temperature: float
) -> np.ndarray:
    """Candidate-row attention only: each candidate over history plus itself.

    ``qc`` is (num_heads, C, head_dim) holding just the candidate queries;
    ``kh``/``vh`` are (num_heads, T, head_dim) over the full sequence.
    """
    h = hist_len
    head_dim = qc.shape[2]
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    scale = 1.0 / (temperature * math.sqrt(head_dim))
    if h == 0:
        # Softmax over a single allowed position (self) is 1.
        return vh.copy()
    s_self = np.einsum("hcd,hcd->hc", qc, kh[:, h:]) * scale
    scores = qc @ kh[:, :h].transpose(0, 2, 1)
    np.multiply(scores, scale, out=scores)
    m = np.maximum(scores.max(axis=2), s_self)
    np.subtract(scores, m[..., None], out=scores)
    np.exp(scores, out=scores)  # scores now holds the history weights
    w_self = np.exp(s_self - m)
    z = scores.sum(axis=2)
    z += w_self
    out = scores @ vh[:, :h]
    out += w_self[..., None] * vh[:, h:]
    np.divide(out, z[..., None], out=out)
    return out


def attention_sumi(
    qh: np.ndarray, kh: np.ndarray, vh: np.ndarray, hist_len: int, temperature: float
) -> np.ndarray:
    """Mask-structured attention for all heads at once.

    ``qh``/``kh``/``vh`` are (num_heads, T, head_dim) with the first
    ``hist_len`` positions being history and the rest candidates. Avoids ever
    forming scores between distinct candidates.
    """
    nh, t, head_dim = qh.shape
    h = hist_len
    c = t - h
    if not 0 <= h <= t:
        raise ValueError(f"hist_len {h} out of range for sequence length {t}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    scale = 1.0 / (temperature * math.sqrt(head_dim))
    out = np.empty_like(qh)

    if h > 0:
        s_hh = qh[:, :h] @ kh[:, :h].transpose(0, 2, 1)
        np.multiply(s_hh, scale, out=s_hh)
        causal = np.tril(np.ones((h, h), dtype=bool))
        s_hh[:, ~causal] = -np.inf
        out[:, :h] = _softmax_rows_inplace(s_hh) @ vh[:, :h]

    if c > 0:
        out[:, h:] = attention_sumi_candidates(qh[:, h:], kh, vh, h, temperature)

    return out
