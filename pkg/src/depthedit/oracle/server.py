"""HTTP facade exposing any in-process oracle under the /v1/ protocol."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..errors import (
    CapabilityMissingError,
    DepthEditError,
    DimensionMismatchError,
    InvalidInputError,
)
from . import protocol
from .protocol import Oracle


def _error_response(request_id, exc, status):
    return JSONResponse(
        status_code=status,
        content=protocol.encode_error(request_id or "", type(exc).__name__, str(exc)),
    )


def _guard(request_id, capability, oracle, fn):
    if capability not in oracle.capabilities():
        return _error_response(request_id,
                               CapabilityMissingError(f"{capability} not advertised"), 501)
    try:
        return fn()
    except (InvalidInputError, DimensionMismatchError) as exc:
        return _error_response(request_id, exc, 400)
    except CapabilityMissingError as exc:
        return _error_response(request_id, exc, 501)
    except DepthEditError as exc:
        return _error_response(request_id, exc, 500)


def build_app(oracle: Oracle) -> FastAPI:
    """FastAPI app implementing the oracle wire protocol for ``oracle``."""
    app = FastAPI(title="depthedit oracle", docs_url=None, redoc_url=None)

    @app.get("/v1/capabilities")
    def capabilities():
        depth_fn = getattr(oracle, "queue_depth", None)
        return {"capabilities": sorted(oracle.capabilities()),
                "queue_depth": int(depth_fn()) if callable(depth_fn) else 0}

    @app.post("/v1/estimate_depth")
    def estimate_depth(body: dict):
        request_id, image = protocol.decode_estimate_depth_request(body)

        def run():
            depth = oracle.estimate_depth(image)
            return protocol.encode_depth_response(request_id, depth)

        return _guard(request_id, protocol.ESTIMATE_DEPTH, oracle, run)

    @app.post("/v1/inpaint")
    def inpaint(body: dict):
        request_id, image, hole, depth_hint, prompt = protocol.decode_inpaint_request(body)

        def run():
            out = oracle.inpaint(image, hole, depth_hint=depth_hint, prompt=prompt)
            return protocol.encode_image_response(request_id, out)

        return _guard(request_id, protocol.INPAINT_IMAGE, oracle, run)

    @app.post("/v1/undistort")
    def undistort(body: dict):
        request_id, request = protocol.decode_undistort_request(body)

        def run():
            out = oracle.undistort(request)
            return protocol.encode_image_response(request_id, out)

        return _guard(request_id, protocol.UNDISTORT, oracle, run)

    @app.post("/v1/match_dense")
    def match_dense(body: dict):
        request_id, image_a, image_b = protocol.decode_match_request(body)

        def run():
            match = oracle.match_dense(image_a, image_b)
            return protocol.encode_match_response(request_id, match)

        return _guard(request_id, protocol.DENSE_MATCH, oracle, run)

    @app.post("/v1/caption")
    def caption(body: dict):
        request_id, image = protocol.decode_estimate_depth_request(body)

        def run():
            return protocol.encode_caption_response(request_id, oracle.caption(image))

        return _guard(request_id, protocol.CAPTION, oracle, run)

    @app.post("/v1/embed")
    def embed(body: dict):
        request_id, image = protocol.decode_estimate_depth_request(body)

        def run():
            return protocol.encode_embed_response(request_id, oracle.embed(image))

        return _guard(request_id, protocol.EMBED, oracle, run)

    @app.post("/v1/tune_adaptation")
    def tune_adaptation(body: dict):
        request_id, image, session_id = protocol.decode_tune_request(body)

        def run():
            handle = oracle.tune_adaptation(image, session_id)
            return protocol.encode_handle_response(request_id, handle)

        return _guard(request_id, protocol.TUNE_LORA, oracle, run)

    return app


def serve_oracle(oracle: Oracle, host: str = "127.0.0.1", port: int = 8800) -> None:
    """Blocking server entry point used by the CLI."""
    import uvicorn

    uvicorn.run(build_app(oracle), host=host, port=port, log_level="warning")
