# src/api/recommend_client.py

from __future__ import annotations

import os
from typing import Any, Dict, List, Optional

import requests


class RecommendClient:
    """실행 중인 추천 서비스(POST /recommend)를 부르는 얇은 클라이언트."""

    def __init__(self, base_url: Optional[str] = None, timeout: float = 30.0):
        self.base_url = (base_url or os.getenv("RECOMMEND_URL") or "").rstrip("/")
        self.timeout = timeout

        if not self.base_url:
            raise RuntimeError("서비스 주소가 필요합니다 (--server 또는 RECOMMEND_URL).")

    def recommend(
        self,
        description: str,
        top_n: Optional[int] = None,
        h: Optional[int] = None,
        fusion_weight: Optional[float] = None,
    ) -> Dict[str, Any]:
        """
        반환값은 {"recommendations": [{"api_name", "api_id", "score", ...}], "latency_ms"} 형태.
        """
        body: Dict[str, Any] = {"description": description}
        if top_n is not None:
            body["top_n"] = top_n
        if h is not None:
            body["h"] = h
        if fusion_weight is not None:
            body["lambda"] = fusion_weight

        resp = requests.post(f"{self.base_url}/recommend", json=body, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def health(self) -> Dict[str, Any]:
        resp = requests.get(f"{self.base_url}/healthz", timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def api_names(self, description: str, **kwargs: Any) -> List[str]:
        data = self.recommend(description, **kwargs)
        return [item["api_name"] for item in data.get("recommendations") or []]
