"""Request pipeline and HTTP wire-layer tests."""

import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from flameserve.api import create_app
from flameserve.cache import CacheMode
from flameserve.model import model_forward
from flameserve.service import RequestError, ScoreRequest, Service
from tests.helpers import tiny_service_config


def request_of(history, candidates, user_id=1):
    return ScoreRequest(
        user_id=user_id,
        history_item_ids=np.asarray(history, dtype=np.int64),
        candidate_item_ids=np.asarray(candidates, dtype=np.int64),
        context={},
    )


def test_response_has_one_row_per_candidate():
    service = Service(tiny_service_config())
    resp = service.handle_request(request_of(range(8), range(100, 105)))
    assert resp.scores.shape == (5, service.config.model.num_tasks)
    assert resp.overall_latency_ms >= resp.compute_latency_ms >= 0.0
    service.close()


def test_identical_requests_identical_scores():
    service = Service(tiny_service_config(mode=CacheMode.SYNC))
    req = request_of(range(12), range(50, 57))
    first = service.handle_request(req)
    second = service.handle_request(req)
    np.testing.assert_array_equal(first.scores, second.scores)
    service.close()


def test_pipeline_matches_direct_forward():
    service = Service(tiny_service_config(mode=CacheMode.SYNC))
    req = request_of(range(16), range(200, 221))
    resp = service.handle_request(req)
    hist = service.resolve_embeddings(req.history_item_ids)
    cand = service.resolve_embeddings(req.candidate_item_ids)
    direct = model_forward(hist, cand, service.params, service.config.model)
    assert np.abs(resp.scores - direct).max() <= 1e-10
    service.close()


def test_cold_async_cache_scores_zero_embeddings():
    service = Service(tiny_service_config(mode=CacheMode.ASYNC))
    req = request_of(range(8), range(300, 303))
    resp = service.handle_request(req)  # every lookup returns the empty outcome
    d = service.config.model.hidden_dim
    zeros_hist = np.zeros((8, d))
    zeros_cand = np.zeros((3, d))
    expected = model_forward(zeros_hist, zeros_cand, service.params, service.config.model)
    assert np.abs(resp.scores - expected).max() <= 1e-10
    service.close()


def test_pairs_processed_counts_real_candidates_only():
    service = Service(tiny_service_config())
    totals = 0
    for count in (1, 5, 16, 21):  # several pad to shape 4/8/16 chunks
        service.handle_request(request_of(range(8), range(1000, 1000 + count)))
        totals += count
    assert service.registry.snapshot().pairs_processed == totals
    service.close()


def test_transfer_model_recorded_pinned_below_pageable():
    service = Service(tiny_service_config())
    for count in (3, 9):
        service.handle_request(request_of(range(8), range(count)))
    snap = service.registry.snapshot()
    assert len(snap.transfer_pinned_s) == 2
    for pinned, pageable in zip(snap.transfer_pinned_s, snap.transfer_pageable_s):
        assert 0 < pinned < pageable
    service.close()


def test_contract_violations_raise_request_errors():
    service = Service(tiny_service_config())
    with pytest.raises(RequestError):
        service.handle_request(request_of(range(8), []))
    with pytest.raises(RequestError):
        service.handle_request(request_of(range(7), [1]))  # 7 % num_blocks != 0
    with pytest.raises(RequestError):
        service.handle_request(request_of(range(8), range(3000)))  # above max_candidates
    with pytest.raises(RequestError):
        service.handle_request(request_of(range(66), [1]))  # above max_history_len
    service.close()


def test_concurrent_identical_requests_agree():
    service = Service(tiny_service_config(mode=CacheMode.SYNC))
    req = request_of(range(16), range(40, 52))
    service.handle_request(req)  # warm the cache
    results = [None] * 8

    def worker(i):
        results[i] = service.handle_request(req).scores

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for scores in results[1:]:
        np.testing.assert_array_equal(scores, results[0])
    service.close()


def test_close_drains_inflight_requests():
    import time
    from dataclasses import replace

    from flameserve.store import RemoteStoreConfig

    config = tiny_service_config()
    config = replace(
        config,
        remote_store=RemoteStoreConfig(
            latency_ms_mean=30.0, latency_ms_p99=30.0, bytes_per_value=64, seed=17
        ),
    )
    service = Service(config)
    responses = []
    rejected = []

    def worker(i):
        try:
            responses.append(service.handle_request(request_of(range(2), [100 + i])))
        except Exception as exc:  # noqa: BLE001
            rejected.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    time.sleep(0.1)  # store latency keeps all four inside the pipeline
    service.close()  # must wait for the in-flight requests, then return
    for t in threads:
        t.join()
    assert len(responses) + len(rejected) == 4
    assert len(responses) >= 1  # typical run: all four accepted and answered
    assert all(r.scores.shape == (1, 2) for r in responses)
    with pytest.raises(Exception):
        service.handle_request(request_of(range(2), [1]))


# -- HTTP layer ---------------------------------------------------------------


@pytest.fixture()
def client():
    service = Service(tiny_service_config(mode=CacheMode.SYNC))
    with TestClient(create_app(service)) as c:
        yield c


def test_http_score_roundtrip(client):
    body = {"user_id": 7, "history": list(range(8)), "candidates": [10, 11, 12]}
    resp = client.post("/score", json=body)
    assert resp.status_code == 200
    payload = resp.json()
    assert len(payload["scores"]) == 3
    assert all(len(row) == 2 for row in payload["scores"])
    assert payload["overall_latency_ms"] >= payload["compute_latency_ms"] >= 0.0
    again = client.post("/score", json=body).json()
    assert again["scores"] == payload["scores"]


def test_http_malformed_body_is_422(client):
    resp = client.post("/score", json={"user_id": "not-an-int"})
    assert resp.status_code == 422


def test_http_contract_violation_is_400(client):
    resp = client.post("/score", json={"user_id": 1, "history": [1], "candidates": [2]})
    assert resp.status_code == 400


def test_http_metrics_totals(client):
    for count in (2, 3):
        client.post(
            "/score",
            json={"user_id": 1, "history": list(range(8)), "candidates": list(range(count))},
        )
    metrics = client.get("/metrics").json()
    assert metrics["requests_total"] == 2
    assert metrics["pairs_processed"] == 5
    assert metrics["cache"]["remote_queries"] > 0
    assert "steady_state_allocs" in metrics and metrics["steady_state_allocs"] == 0


def test_http_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}
