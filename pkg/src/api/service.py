# src/api/service.py

from __future__ import annotations

import logging
import time
import uuid
from dataclasses import asdict
from typing import List, Optional

import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from src.errors import ConfigError, QueryError
from src.pipeline.recommender import ModelBundle, PipelineConfig, recommend

logger = logging.getLogger(__name__)


class RecommendRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    description: str = Field(..., description="요구사항 설명 (자연어)")
    top_n: Optional[int] = Field(default=None, ge=1)
    h: Optional[int] = Field(default=None, ge=1)
    lambda_: Optional[float] = Field(default=None, alias="lambda", ge=0.0, le=1.0)


class RecommendedItem(BaseModel):
    api_name: str
    api_id: int
    score: float
    filter_score: float
    matcher_score: Optional[float]


class RecommendResponse(BaseModel):
    recommendations: List[RecommendedItem]
    latency_ms: float


def _error(status: int, message: str, error_id: Optional[str] = None) -> JSONResponse:
    body = {"error": message}
    if error_id:
        body["error_id"] = error_id
    return JSONResponse(status_code=status, content=body)


def create_app(bundle: ModelBundle, pipeline: PipelineConfig) -> FastAPI:
    """
    로딩이 끝난 모델 묶음 하나를 모든 요청이 읽기만 한다.
    설정 변경은 재시작으로만.
    """
    pipeline.validate_for(bundle.corpus.num_apis)
    app = FastAPI(title="Web API Recommender", version="1.0.0")
    started_at = time.time()

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request: Request, exc: RequestValidationError):
        return _error(400, f"잘못된 요청입니다: {exc.errors()}")

    @app.exception_handler(QueryError)
    async def _on_query(request: Request, exc: QueryError):
        return _error(400, str(exc))

    @app.exception_handler(ConfigError)
    async def _on_config(request: Request, exc: ConfigError):
        return _error(400, str(exc))

    # 처리되지 않은 예외는 여기서 응답으로 바꾸고 다시 던지지 않는다 (로그는 한 번만)
    @app.middleware("http")
    async def _on_internal(request: Request, call_next):
        try:
            return await call_next(request)
        except Exception:
            error_id = uuid.uuid4().hex
            logger.exception(f"요청 처리 실패 (error_id={error_id})")
            return _error(500, "내부 오류가 발생했습니다.", error_id)

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "uptime_seconds": round(time.time() - started_at, 3),
            "model": bundle.info,
            "pipeline": asdict(pipeline),
        }

    # sync def → threadpool 에서 동시 처리. 요청마다 새 PipelineConfig 만 만든다
    @app.post("/recommend", response_model=RecommendResponse)
    def post_recommend(req: RecommendRequest):
        t0 = time.perf_counter()
        config = pipeline.with_overrides(
            top_n=req.top_n, candidate_count=req.h, fusion_weight=req.lambda_
        )
        rec = recommend(req.description, config, bundle)
        return RecommendResponse(
            recommendations=[RecommendedItem(**asdict(item)) for item in rec.items],
            latency_ms=round((time.perf_counter() - t0) * 1000.0, 3),
        )

    return app


def serve(bundle: ModelBundle, pipeline: PipelineConfig, host: str, port: int) -> None:
    app = create_app(bundle, pipeline)
    logger.info(f"서비스 시작: http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="info")
