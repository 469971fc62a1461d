"""HTTP recognition service and the classify entry point it wraps.

One bundle and one catalog are loaded at startup and shared read-only
across requests; request handling never mutates them, so concurrent
identical uploads produce identical bodies.  All error responses use
one machine-readable shape: {"error": {"code", "message"}}.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import ops
from .bundle import load_bundle
from .catalog import SpeciesCatalog
from .dataset import decode_rgb
from .errors import DatasetError, ServiceError
from .graph import CompGraph, forward, infer_shapes

DEFAULT_MAX_UPLOAD = 16 * 1024 * 1024
DEFAULT_LISTEN = "127.0.0.1:8000"
DEFAULT_TOP_K = 3
ENV_PREFIX = "CANOPY_"


@dataclass(frozen=True)
class PredictionEntry:
    label: str
    probability: float
    description: str


@dataclass(frozen=True)
class Prediction:
    """Ranked classification outcome plus the model that produced it."""

    entries: tuple
    model_name: str
    model_version: str

    def as_dict(self) -> dict:
        return {
            "predictions": [
                {
                    "label": e.label,
                    "probability": e.probability,
                    "description": e.description,
                }
                for e in self.entries
            ],
            "model": {"name": self.model_name, "version": self.model_version},
        }


def _prepare(graph: CompGraph, image_bytes: bytes):
    height, width, _ = graph.input_shape
    decoded = decode_rgb(bytes(image_bytes))
    resized = ops.resize_bilinear(decoded, height, width)
    return ops.normalize_pixels(resized, mode="symmetric")


def classify(
    graph: CompGraph,
    labels,
    catalog: SpeciesCatalog,
    image_bytes: bytes,
    k: int = DEFAULT_TOP_K,
) -> Prediction:
    """Decode, preprocess, forward, and rank the top-k classes.

    Ties are broken by ascending label so equal probabilities always
    rank in the same order.
    """
    if k < 1:
        raise ServiceError(f"k must be >= 1, got {k}")
    label_list = list(labels)
    output_width = infer_shapes(graph)[graph.output_id][-1]
    if len(label_list) != output_width:
        raise ServiceError(
            f"bundle/label mismatch: model outputs {output_width} classes, "
            f"label list has {len(label_list)}"
        )
    probabilities = forward(graph, _prepare(graph, image_bytes)).data[0]
    order = sorted(range(len(label_list)), key=lambda i: (-probabilities[i], label_list[i]))
    entries = tuple(
        PredictionEntry(
            label=label_list[i],
            probability=float(probabilities[i]),
            description=catalog.description(label_list[i]),
        )
        for i in order[: min(k, len(label_list))]
    )
    return Prediction(
        entries=entries,
        model_name=str(graph.metadata.get("name", "model")),
        model_version=str(graph.metadata.get("version", "0")),
    )


@dataclass(frozen=True)
class ServeConfig:
    model_path: Path
    catalog_path: Optional[Path] = None
    listen: str = DEFAULT_LISTEN
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    cors_origin: str = "*"
    ui_dir: Optional[Path] = None

    @classmethod
    def resolve(
        cls,
        model_path=None,
        catalog_path=None,
        listen=None,
        max_upload_bytes=None,
        cors_origin=None,
        ui_dir=None,
    ) -> "ServeConfig":
        """Apply CANOPY_* environment fallbacks beneath explicit values."""
        env = os.environ
        model = model_path or env.get(ENV_PREFIX + "MODEL")
        if not model:
            raise ServiceError("no model bundle given (use --model or CANOPY_MODEL)")
        catalog = catalog_path or env.get(ENV_PREFIX + "CATALOG")
        upload = max_upload_bytes
        if upload is None:
            raw = env.get(ENV_PREFIX + "MAX_UPLOAD_BYTES")
            try:
                upload = int(raw) if raw else DEFAULT_MAX_UPLOAD
            except ValueError:
                raise ServiceError(f"CANOPY_MAX_UPLOAD_BYTES must be an integer, got {raw!r}") from None
        if upload < 1:
            raise ServiceError(f"max upload size must be positive, got {upload}")
        ui = ui_dir or env.get(ENV_PREFIX + "UI")
        return cls(
            model_path=Path(model),
            catalog_path=Path(catalog) if catalog else None,
            listen=listen or env.get(ENV_PREFIX + "LISTEN", DEFAULT_LISTEN),
            max_upload_bytes=upload,
            cors_origin=cors_origin or env.get(ENV_PREFIX + "CORS_ORIGIN", "*"),
            ui_dir=Path(ui) if ui else None,
        )


def create_app(config: ServeConfig) -> FastAPI:
    """Build the FastAPI app with model and catalog loaded once."""
    if not Path(config.model_path).is_file():
        raise ServiceError(f"model bundle {config.model_path} does not exist")
    graph, labels = load_bundle(config.model_path)
    catalog = SpeciesCatalog.load(config.catalog_path) if config.catalog_path else SpeciesCatalog.bundled()
    quantized = any(node.quant for node in graph.nodes)
    model_info = {
        "name": str(graph.metadata.get("name", "model")),
        "version": str(graph.metadata.get("version", "0")),
        "classes": len(labels),
        "input_size": list(graph.input_shape),
        "parameters": graph.param_count(),
        "quantized": quantized,
    }

    app = FastAPI(title="canopy recognizer", docs_url=None, redoc_url=None, openapi_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[config.cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def fail(status: int, code: str, message: str):
        raise HTTPException(status_code=status, detail={"code": code, "message": message})

    # registered on the starlette base class so framework-raised errors
    # (404 route miss, 405 wrong method) use the same shape as ours
    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        detail = exc.detail
        if not isinstance(detail, dict):
            codes = {404: "not_found", 405: "method_not_allowed"}
            code = codes.get(exc.status_code, "http_error")
            detail = {"code": code, "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content={"error": detail})

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "bad_request", "message": str(exc.errors()[:1])}},
        )

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "model": model_info}

    @app.get("/api/species")
    async def species():
        return {
            "species": [
                {
                    "label": label,
                    "display_name": catalog.info(label).display_name,
                    "description": catalog.description(label),
                }
                for label in labels
            ]
        }

    @app.post("/api/classify")
    async def classify_route(request: Request, k: int = DEFAULT_TOP_K):
        if k < 1:
            fail(400, "bad_request", f"k must be >= 1, got {k}")
        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > config.max_upload_bytes:
            fail(413, "payload_too_large",
                 f"upload exceeds the {config.max_upload_bytes} byte limit")
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            part = form.get("image")
            if part is None:
                fail(400, "missing_image", "multipart upload must include an 'image' field")
            data = await part.read()
        else:
            data = await request.body()
        if not data:
            fail(400, "empty_body", "request carried no image bytes")
        if len(data) > config.max_upload_bytes:
            fail(413, "payload_too_large",
                 f"upload exceeds the {config.max_upload_bytes} byte limit")
        try:
            prediction = await run_in_threadpool(classify, graph, labels, catalog, data, k)
        except DatasetError as exc:
            fail(400, "undecodable_image", str(exc))
        return prediction.as_dict()

    if config.ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        if not Path(config.ui_dir).is_dir():
            raise ServiceError(f"UI directory {config.ui_dir} does not exist")
        app.mount("/", StaticFiles(directory=str(config.ui_dir), html=True), name="ui")

    return app


def serve(config: ServeConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    host, _, port = config.listen.rpartition(":")
    if not host or not port.isdigit():
        raise ServiceError(f"listen address must be host:port, got {config.listen!r}")
    uvicorn.run(app, host=host, port=int(port), log_level="info")
