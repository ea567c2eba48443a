"""HTTP wire layer: POST /score and GET /metrics over the in-process service."""

from __future__ import annotations

import contextlib
import logging

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import ServiceConfig
from .service import RequestError, ScoreRequest, Service, ServiceClosedError

logger = logging.getLogger(__name__)


class ScoreRequestModel(BaseModel):
    user_id: int
    history: list[int] = Field(default_factory=list)
    candidates: list[int]
    context: dict[str, float | int | str | bool] = Field(default_factory=dict)


class ScoreResponseModel(BaseModel):
    scores: list[list[float]]
    overall_latency_ms: float
    compute_latency_ms: float


def create_app(service: Service) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        service.close()

    app = FastAPI(title="flameserve", lifespan=lifespan)

    @app.post("/score", response_model=ScoreResponseModel)
    def score(req: ScoreRequestModel) -> ScoreResponseModel:
        request = ScoreRequest(
            user_id=req.user_id,
            history_item_ids=np.asarray(req.history, dtype=np.int64),
            candidate_item_ids=np.asarray(req.candidates, dtype=np.int64),
            context=req.context,
        )
        try:
            resp = service.handle_request(request)
        except RequestError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ServiceClosedError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        return ScoreResponseModel(
            scores=resp.scores.tolist(),
            overall_latency_ms=resp.overall_latency_ms,
            compute_latency_ms=resp.compute_latency_ms,
        )

    @app.get("/metrics")
    def metrics() -> dict:
        return service.metrics_snapshot()

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    return app


def serve(config: ServiceConfig) -> None:
    """Boot the service and block serving HTTP until interrupted."""
    service = Service(config)
    app = create_app(service)
    logger.info("serving on %s", config.listen_addr)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
