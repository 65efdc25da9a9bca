"""Generative-oracle boundary: protocol, mocks, HTTP client/server."""

from __future__ import annotations

from ..errors import InvalidInputError
from .client import HttpOracle
from .mocks import IdentityOracle, SceneOracle
from .protocol import (
    ALL_CAPABILITIES,
    CAPTION,
    DENSE_MATCH,
    EMBED,
    ESTIMATE_DEPTH,
    INPAINT_IMAGE,
    PIPELINE_CAPABILITIES,
    TUNE_LORA,
    UNDISTORT,
    MatchResult,
    Oracle,
    UndistortRequest,
    require_capabilities,
)
from .scene import Scene, SceneConfig
from .server import build_app, serve_oracle


def create_oracle(spec: str, request_prefix: str | None = None) -> Oracle:
    """Build an oracle from a descriptor string.

    ``mock:identity`` for the identity mock, ``mock:<path.json>`` for a
    scene-backed mock, ``http(s)://...`` for a remote service.
    """
    if spec.startswith(("http://", "https://")):
        return HttpOracle(spec, request_prefix=request_prefix)
    if spec.startswith("mock:"):
        target = spec[len("mock:"):]
        if target == "identity":
            return IdentityOracle()
        return SceneOracle.from_config_file(target)
    raise InvalidInputError(
        f"unrecognized oracle spec {spec!r}; expected mock:identity, mock:<scene.json> or a URL")


__all__ = [
    "ALL_CAPABILITIES", "CAPTION", "DENSE_MATCH", "EMBED", "ESTIMATE_DEPTH",
    "INPAINT_IMAGE", "PIPELINE_CAPABILITIES", "TUNE_LORA", "UNDISTORT",
    "MatchResult", "Oracle", "UndistortRequest", "require_capabilities",
    "HttpOracle", "IdentityOracle", "SceneOracle", "Scene", "SceneConfig",
    "build_app", "serve_oracle", "create_oracle",
]
