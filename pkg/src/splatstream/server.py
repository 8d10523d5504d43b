"""Streaming backend: stateless per-frame render service over HTTP.

Every POST /render is an isolated task: acquire the model, rasterize the
requested pose at the requested resolution and JPEG quality, release the
model, return the bytes. No response is ever cached and no per-client
state is kept, so any request can be replayed in isolation with an
identical result.

The native transport is HTTP/3 over QUIC (ALPN "h3") when the optional
`aioquic` stack is installed; an HTTP/1.1 fallback listener exists for
tooling that cannot speak h3 and is off unless explicitly enabled.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import os

from pydantic import BaseModel, Field, ValidationError
from starlette.applications import Starlette
from starlette.requests import Request
from starlette.responses import FileResponse, JSONResponse, Response
from starlette.routing import Mount, Route
from starlette.staticfiles import StaticFiles

from .camera import Intrinsics, pose_from_degrees
from .model import LoadFailed, ModelRegistry, UnknownModel
from .render import RenderStats, encode_jpeg, render_framebuffer

logger = logging.getLogger(__name__)

DEFAULT_STATIC_DIR = Path(__file__).parent / "static"
DEFAULT_EVICTION_PERIOD = 30.0


class TransportUnavailable(RuntimeError):
    pass


@dataclass
class ServerConfig:
    model_root: Path
    host: str = "127.0.0.1"
    port: int = 8443
    cert_path: Path | None = None
    key_path: Path | None = None
    eviction_timeout: float = 300.0
    eviction_period: float = DEFAULT_EVICTION_PERIOD
    inflight_cap: int = field(default_factory=lambda: 4 * (os.cpu_count() or 1))
    h1_fallback: bool = False
    static_dir: Path = DEFAULT_STATIC_DIR
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def from_file(cls, path: Path, **overrides) -> "ServerConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("model_root", "cert_path", "key_path", "static_dir"):
            if data.get(key) is not None:
                data[key] = Path(data[key])
        return cls(**data)


class RenderRequestModel(BaseModel):
    """Wire schema for POST /render (flat JSON, snake_case)."""

    model_id: str
    azimuth: float
    elevation: float
    translation: tuple[float, float, float]
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float = Field(ge=0)
    cy: float = Field(ge=0)
    width: int = Field(ge=64, le=4096)
    height: int = Field(ge=64, le=4096)
    jpeg_quality: int = Field(ge=1, le=100)
    frame_id: int = Field(ge=0)
    background: tuple[float, float, float] | None = None


def _validation_message(exc: ValidationError) -> str:
    first = exc.errors()[0]
    location = ".".join(str(p) for p in first["loc"]) or "body"
    return f"{location}: {first['msg']}"


def create_app(registry: ModelRegistry, config: ServerConfig) -> Starlette:
    """Assemble the ASGI application around a model registry."""

    executor = ThreadPoolExecutor(max_workers=max(1, config.inflight_cap),
                                  thread_name_prefix="render")

    def _render_sync(req: RenderRequestModel) -> tuple[bytes, RenderStats]:
        pose = pose_from_degrees(req.azimuth, req.elevation, req.translation)
        intr = Intrinsics(fx=req.fx, fy=req.fy, cx=req.cx, cy=req.cy,
                          width=req.width, height=req.height)
        stats = RenderStats()
        start = time.perf_counter()
        with registry.lease(req.model_id) as prims:
            fb = render_framebuffer(prims, pose, intr,
                                    background=req.background or config.background,
                                    stats=stats)
            payload = encode_jpeg(fb, req.jpeg_quality)
        stats.render_ms = (time.perf_counter() - start) * 1000.0
        return payload, stats

    async def handle_render(request: Request) -> Response:
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return JSONResponse({"error": f"invalid JSON body: {exc}"}, status_code=422)
        try:
            req = RenderRequestModel.model_validate(body)
        except ValidationError as exc:
            return JSONResponse({"error": _validation_message(exc)}, status_code=422)

        loop = asyncio.get_running_loop()
        try:
            payload, stats = await loop.run_in_executor(executor, _render_sync, req)
        except UnknownModel as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        except Exception as exc:  # noqa: BLE001 - keep the service alive
            logger.exception("render failed")
            return JSONResponse({"error": f"render failed: {exc}"}, status_code=500)

        return Response(
            content=payload,
            media_type="image/jpeg",
            headers={
                "X-Render-Ms": f"{stats.render_ms:.3f}",
                "X-Frame-Id": str(req.frame_id),
                "Cache-Control": "no-store",
            },
        )

    async def handle_models_list(request: Request) -> JSONResponse:
        items = []
        for entry in registry.snapshot():
            items.append({
                "id": entry["id"],
                "name": entry["name"],
                "state": entry["state"],
                "preview_url": f"/models/{entry['id']}/preview" if entry["has_preview"] else None,
            })
        return JSONResponse(items)

    async def handle_model_load(request: Request) -> JSONResponse:
        model_id = request.path_params["model_id"]
        loop = asyncio.get_running_loop()
        try:
            record = await loop.run_in_executor(executor, registry.ensure_loaded, model_id)
        except UnknownModel as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except LoadFailed as exc:
            return JSONResponse({"error": str(exc)}, status_code=500)
        return JSONResponse({"id": model_id, "state": record.state.value})

    async def handle_model_preview(request: Request) -> Response:
        model_id = request.path_params["model_id"]
        rec = registry.records.get(model_id)
        if rec is None or rec.preview_path is None or not rec.preview_path.is_file():
            return JSONResponse({"error": "no preview available"}, status_code=404)
        return FileResponse(rec.preview_path, media_type="image/jpeg")

    async def handle_index(request: Request) -> Response:
        index = Path(config.static_dir) / "index.html"
        if not index.is_file():
            return JSONResponse({"error": "client assets not installed"}, status_code=404)
        return FileResponse(index, media_type="text/html")

    async def handle_healthz(request: Request) -> JSONResponse:
        return JSONResponse({"status": "ok", "models": len(registry.records)})

    async def eviction_loop() -> None:
        while True:
            await asyncio.sleep(config.eviction_period)
            try:
                registry.evict_inactive()
            except Exception:  # noqa: BLE001
                logger.exception("eviction pass failed")

    @contextlib.asynccontextmanager
    async def lifespan(app: Starlette):
        task = asyncio.create_task(eviction_loop())
        try:
            yield
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task
            # Drain in-flight renders before the registry goes away.
            executor.shutdown(wait=True)

    routes = [
        Route("/", handle_index, methods=["GET"]),
        Route("/healthz", handle_healthz, methods=["GET"]),
        Route("/models", handle_models_list, methods=["GET"]),
        Route("/models/{model_id}/load", handle_model_load, methods=["POST"]),
        Route("/models/{model_id}/preview", handle_model_preview, methods=["GET"]),
        Route("/render", handle_render, methods=["POST"]),
        Mount("/static", app=StaticFiles(directory=str(config.static_dir)), name="static"),
    ]
    app = Starlette(routes=routes, lifespan=lifespan)
    app.state.registry = registry
    app.state.config = config
    return app


def build_server(config: ServerConfig) -> Starlette:
    registry = ModelRegistry.from_directory(config.model_root,
                                            eviction_timeout=config.eviction_timeout)
    return create_app(registry, config)


def serve(config: ServerConfig, transport: str = "h3") -> None:
    """Run the service on the chosen transport.

    "h3" requires the optional aioquic stack; without it, enable the
    HTTP/1.1 fallback (`h1_fallback` / --h1-fallback) and pass
    transport="h1" for plain-socket serving.
    """
    app = build_server(config)
    if transport == "h3":
        try:
            import aioquic  # noqa: F401
        except ImportError:
            raise TransportUnavailable(
                "HTTP/3 serving needs the optional 'aioquic' package, which is "
                "not installed. Install it, or start the HTTP/1.1 fallback with "
                "--transport h1 --h1-fallback.") from None
        raise TransportUnavailable(
            "HTTP/3 transport adapter not wired for this aioquic installation; "
            "use --transport h1 --h1-fallback.")
    if transport == "h1":
        if not config.h1_fallback:
            raise TransportUnavailable(
                "the HTTP/1.1 fallback listener is disabled; pass --h1-fallback "
                "to enable it for tooling without h3 support.")
        import uvicorn

        kwargs = {}
        if config.cert_path and config.key_path:
            kwargs.update(ssl_certfile=str(config.cert_path),
                          ssl_keyfile=str(config.key_path))
        uvicorn.run(app, host=config.host, port=config.port, log_level="info", **kwargs)
        return
    raise TransportUnavailable(f"unknown transport {transport!r}")
