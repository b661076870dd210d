# tests/test_service.py

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from src.api import recommend_client, service
from src.api.recommend_client import RecommendClient
from src.api.service import create_app
from src.errors import ConfigError
from src.pipeline.recommender import MATCHER_ON_CANDIDATES, PipelineConfig, recommend

QUERY = "share tagged photos and show them on interactive maps"
SERVICE_PIPELINE = PipelineConfig(candidate_count=10, top_n=5)


@pytest.fixture
def client(bundle):
    with TestClient(create_app(bundle, SERVICE_PIPELINE), raise_server_exceptions=False) as c:
        yield c


def test_recommend_ok(client, bundle):
    resp = client.post("/recommend", json={"description": QUERY})
    assert resp.status_code == 200
    body = resp.json()
    items = body["recommendations"]
    assert len(items) == 5
    scores = [item["score"] for item in items]
    assert scores == sorted(scores, reverse=True)
    assert body["latency_ms"] >= 0.0

    expected = recommend(QUERY, SERVICE_PIPELINE, bundle)
    assert [item["api_id"] for item in items] == list(expected.api_ids)
    assert items[0]["api_name"] == bundle.corpus.api_name(items[0]["api_id"])


def test_lambda_one_uses_matcher_ordering(client, bundle):
    resp = client.post("/recommend", json={"description": QUERY, "lambda": 1.0, "top_n": 3})
    assert resp.status_code == 200
    on_cands = PipelineConfig(candidate_count=10, top_n=3, mode=MATCHER_ON_CANDIDATES)
    expected = recommend(QUERY, on_cands, bundle)
    assert [item["api_id"] for item in resp.json()["recommendations"]] == list(expected.api_ids)


@pytest.mark.parametrize(
    "body",
    [
        {"description": ""},
        {"description": "   "},
        {},
        {"description": QUERY, "lambda": 1.5},
        {"description": QUERY, "h": 50},
        {"description": QUERY, "h": 3},
        {"description": QUERY, "top_n": 0},
    ],
)
def test_bad_requests(client, body):
    resp = client.post("/recommend", json=body)
    assert resp.status_code == 400
    assert "error" in resp.json()


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["model"] == {"fixture": True}
    assert body["pipeline"]["candidate_count"] == 10


def test_internal_error_has_id(client, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(service, "recommend", boom)
    resp = client.post("/recommend", json={"description": QUERY})
    assert resp.status_code == 500
    body = resp.json()
    assert len(body["error_id"]) == 32
    assert "boom" not in body["error"]


def test_internal_error_is_logged_once_and_not_reraised(bundle, monkeypatch, caplog):
    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(service, "recommend", boom)
    caplog.set_level(logging.ERROR)
    # raise_server_exceptions 기본값(True): 예외가 서버 밖으로 다시 나오면 여기서 터진다
    with TestClient(create_app(bundle, SERVICE_PIPELINE)) as c:
        resp = c.post("/recommend", json={"description": QUERY})
    assert resp.status_code == 500
    error_id = resp.json()["error_id"]
    records = [r for r in caplog.records if r.levelno >= logging.ERROR]
    assert len(records) == 1
    assert error_id in records[0].getMessage()


def test_create_app_rejects_oversized_h(bundle):
    with pytest.raises(ConfigError):
        create_app(bundle, PipelineConfig(candidate_count=45, top_n=5))


def test_client_talks_to_service(client, monkeypatch):
    def post(url, json, timeout):
        return client.post(url.replace("http://svc", ""), json=json)

    def get(url, timeout):
        return client.get(url.replace("http://svc", ""))

    monkeypatch.setattr(recommend_client.requests, "post", post)
    monkeypatch.setattr(recommend_client.requests, "get", get)

    rc = RecommendClient("http://svc/")
    assert rc.health()["status"] == "ok"
    names = rc.api_names(QUERY, top_n=2, h=10, fusion_weight=0.5)
    assert len(names) == 2


def test_client_needs_url(monkeypatch):
    monkeypatch.delenv("RECOMMEND_URL", raising=False)
    with pytest.raises(RuntimeError):
        RecommendClient()


@pytest.mark.slow
def test_concurrent_requests_match_sequential(client):
    queries = [f"{QUERY} number {i % 7}" for i in range(1000)]
    expected = {
        q: client.post("/recommend", json={"description": q}).json()["recommendations"]
        for q in set(queries)
    }

    def call(q):
        resp = client.post("/recommend", json={"description": q})
        return q, resp.status_code, resp.json()["recommendations"]

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(call, queries))

    for q, status, recs in results:
        assert status == 200
        assert recs == expected[q]
