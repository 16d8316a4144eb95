"""FastAPI application: POST /detect and GET /health."""

from __future__ import annotations

import base64
import binascii
import io

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field

from detector_service.models import Model, StubModel


class DetectRequest(BaseModel):
    image: str = Field(description="base64-encoded PNG or JPEG bytes")
    width: int = Field(gt=0)
    height: int = Field(gt=0)


def create_app(model: Model | None = None, ready: bool = True) -> FastAPI:
    app = FastAPI(title="tagmap detector service")
    app.state.model = model if model is not None else StubModel()
    app.state.ready = ready

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    async def health():
        if not app.state.ready:
            return JSONResponse(
                status_code=503,
                content={"model": app.state.model.model_id, "ready": False},
            )
        return {"model": app.state.model.model_id, "ready": True}

    @app.post("/detect")
    async def detect(request: DetectRequest):
        if not app.state.ready:
            return JSONResponse(status_code=503, content={"detail": "model loading"})
        try:
            image_bytes = base64.b64decode(request.image, validate=True)
        except (binascii.Error, ValueError):
            return JSONResponse(status_code=400, content={"detail": "invalid base64 image"})
        try:
            with Image.open(io.BytesIO(image_bytes)) as img:
                decoded_size = img.size
        except (UnidentifiedImageError, OSError):
            return JSONResponse(
                status_code=400, content={"detail": "image bytes are not PNG/JPEG"}
            )
        if decoded_size != (request.width, request.height):
            return JSONResponse(
                status_code=400,
                content={
                    "detail": (
                        f"declared {request.width}x{request.height} but image "
                        f"decodes to {decoded_size[0]}x{decoded_size[1]}"
                    )
                },
            )
        try:
            result = app.state.model.detect(image_bytes, request.width, request.height)
        except Exception:
            return JSONResponse(status_code=500, content={"detail": "inference failed"})
        return result

    return app
