"""Attention kernel tests: naive oracle values, tiled/naive equivalence,
mask-structured fast path, and softmax properties."""

import math

import numpy as np
import pytest

from flameserve.model import (
    attention_naive,
    attention_sumi,
    attention_tiled,
    build_sumi_mask,
    masked_softmax_rows,
)


def random_mask(rng, t):
    hist = int(rng.integers(0, t + 1))
    return build_sumi_mask(hist, t - hist)


def test_singleton_softmax_returns_value_row():
    mask = build_sumi_mask(0, 1)
    q = np.array([[3.7]])
    k = np.array([[-1.2]])
    v = np.array([[0.25]])
    out = attention_naive(q, k, v, mask, temperature=2.0)
    np.testing.assert_array_equal(out, v)


def test_hand_evaluated_candidate_row():
    # head_dim=1, q=k=v=[[1],[2]], tau=1: candidate scores [2, 4], so the
    # output is (1*e^2 + 2*e^4) / (e^2 + e^4) = (1 + 2e^2) / (1 + e^2).
    mask = build_sumi_mask(1, 1)
    qkv = np.array([[1.0], [2.0]])
    out = attention_naive(qkv, qkv, qkv, mask, temperature=1.0)
    expected = (1.0 + 2.0 * math.e**2) / (1.0 + math.e**2)
    assert abs(out[1, 0] - expected) < 1e-12
    assert abs(out[1, 0] - 1.8808) < 1e-4


def test_temperature_irrelevant_when_scores_uniform():
    # Zero queries give identical scores everywhere, so softmax weights are
    # uniform over allowed positions for any temperature.
    rng = np.random.default_rng(0)
    mask = build_sumi_mask(5, 3)
    q = np.zeros((8, 4))
    k = rng.normal(size=(8, 4))
    v = rng.normal(size=(8, 4))
    out1 = attention_naive(q, k, v, mask, temperature=1.0)
    out2 = attention_naive(q, k, v, mask, temperature=2.0)
    np.testing.assert_allclose(out1, out2, atol=1e-14)


def test_tau_rescaling_preserves_weight_ordering():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=(6, 6))
    mask = build_sumi_mask(4, 2)
    for tau in (1.0, 3.0, 10.0):
        masked = np.where(mask.allowed, scores / tau, -np.inf)
        weights = masked_softmax_rows(masked)
        base = masked_softmax_rows(np.where(mask.allowed, scores, -np.inf))
        for row in range(6):
            np.testing.assert_array_equal(np.argsort(weights[row]), np.argsort(base[row]))


def test_masked_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    for hist, cand in [(0, 1), (7, 0), (13, 5), (64, 8)]:
        mask = build_sumi_mask(hist, cand)
        n = hist + cand
        scores = np.where(mask.allowed, rng.normal(size=(n, n)) * 5, -np.inf)
        weights = masked_softmax_rows(scores)
        np.testing.assert_allclose(weights.sum(axis=1), np.ones(n), atol=1e-12)
        assert (weights[~mask.allowed] == 0).all()


def test_tiled_matches_naive_double_precision():
    rng = np.random.default_rng(3)
    for _ in range(25):
        t = int(rng.integers(1, 129))
        head_dim = int(rng.integers(1, 33))
        mask = random_mask(rng, t)
        q, k, v = (rng.normal(size=(t, head_dim)) for _ in range(3))
        ref = attention_naive(q, k, v, mask, 1.3)
        for tile in {1, 2, max(1, t // 2), t}:
            out = attention_tiled(q, k, v, mask, 1.3, tile)
            assert np.abs(out - ref).max() <= 1e-10


def test_tiled_matches_naive_single_precision():
    rng = np.random.default_rng(4)
    for _ in range(25):
        t = int(rng.integers(2, 129))
        head_dim = int(rng.integers(1, 33))
        mask = random_mask(rng, t)
        q, k, v = (rng.normal(size=(t, head_dim)).astype(np.float32) for _ in range(3))
        ref = attention_naive(q, k, v, mask, 1.0)
        for tile in {1, 2, t // 2, t}:
            out = attention_tiled(q, k, v, mask, 1.0, tile)
            assert out.dtype == np.float32
            assert np.abs(out - ref).max() <= 1e-5


def test_single_tile_degenerates_to_naive():
    rng = np.random.default_rng(5)
    t = 64
    mask = build_sumi_mask(48, 16)
    q, k, v = (rng.normal(size=(t, 8)) for _ in range(3))
    out = attention_tiled(q, k, v, mask, 0.7, tile=t)
    ref = attention_naive(q, k, v, mask, 0.7)
    assert np.abs(out - ref).max() <= 1e-12


def test_cross_tile_sizes_agree():
    rng = np.random.default_rng(6)
    t = 96
    mask = build_sumi_mask(64, 32)
    q, k, v = (rng.normal(size=(t, 16)) for _ in range(3))
    out1 = attention_tiled(q, k, v, mask, 1.0, tile=1)
    out2 = attention_tiled(q, k, v, mask, 1.0, tile=t)
    assert np.abs(out1 - out2).max() <= 1e-10


def test_sumi_fast_path_matches_naive_per_head():
    rng = np.random.default_rng(7)
    for hist, cand in [(0, 4), (16, 1), (9, 7), (32, 32)]:
        t = hist + cand
        mask = build_sumi_mask(hist, cand)
        qh, kh, vh = (rng.normal(size=(3, t, 8)) for _ in range(3))
        fast = attention_sumi(qh, kh, vh, hist, 1.1)
        for head in range(3):
            ref = attention_naive(qh[head], kh[head], vh[head], mask, 1.1)
            assert np.abs(fast[head] - ref).max() <= 1e-12


def test_dimension_and_argument_errors():
    mask = build_sumi_mask(1, 1)
    q = np.zeros((2, 4))
    with pytest.raises(ValueError):
        attention_naive(q, np.zeros((3, 4)), q, mask, 1.0)
    with pytest.raises(ValueError):
        attention_naive(q, q, q, build_sumi_mask(2, 2), 1.0)
    with pytest.raises(ValueError):
        attention_naive(q, q, q, mask, 0.0)
    with pytest.raises(ValueError):
        attention_tiled(q, q, q, mask, 1.0, tile=0)
    with pytest.raises(ValueError):
        attention_tiled(q, q, q, mask, 1.0, tile=3)
