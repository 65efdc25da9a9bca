"""Generative-oracle protocol: capability names, request/response types, codecs.

Every pretrained-model capability lives behind this boundary. The wire
format is JSON envelopes carrying base64 PNG images and base64 raw float32
arrays; the codec functions here are shared by the HTTP client and server
so both sides serialize identically, byte for byte, given equal payloads.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatchError, InvalidInputError
from ..imgio import b64_float32, b64_mask, b64_png, float32_b64, png_b64

# Capability names (fixed vocabulary; adapters may advertise extras).
ESTIMATE_DEPTH = "EstimateDepth"
INPAINT_IMAGE = "InpaintImage"
UNDISTORT = "Undistort"
DENSE_MATCH = "DenseMatch"
CAPTION = "Caption"
TUNE_LORA = "TuneLora"
EMBED = "Embed"

ALL_CAPABILITIES = frozenset({
    ESTIMATE_DEPTH, INPAINT_IMAGE, UNDISTORT, DENSE_MATCH, CAPTION, TUNE_LORA, EMBED,
})

# Capabilities Algorithm needs for a full edit run.
PIPELINE_CAPABILITIES = frozenset({
    ESTIMATE_DEPTH, INPAINT_IMAGE, UNDISTORT, DENSE_MATCH, CAPTION, TUNE_LORA,
})

DEFAULT_TIMEOUT_S = 120.0


@dataclass(frozen=True)
class MatchResult:
    """Dense flow from frame a onto frame b with per-pixel confidence."""

    flow: np.ndarray        # (H, W, 2) displacement in pixels (du, dv)
    confidence: np.ndarray  # (H, W) in [0, 1]

    def __post_init__(self):
        flow = np.asarray(self.flow, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if flow.ndim != 3 or flow.shape[2] != 2 or conf.shape != flow.shape[:2]:
            raise InvalidInputError("flow must be (H,W,2) with (H,W) confidence")
        if conf.size and (conf.min() < -1e-9 or conf.max() > 1 + 1e-9):
            raise InvalidInputError("confidences must lie in [0, 1]")
        object.__setattr__(self, "flow", flow)
        object.__setattr__(self, "confidence", np.clip(conf, 0.0, 1.0))


@dataclass(frozen=True)
class UndistortRequest:
    """Constrained generative correction of a distorted render."""

    image: np.ndarray
    max_noise_level: float                 # sigma in [0, 1]; 0 must be identity
    foreground_mask: np.ndarray | None = None
    session_id: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.max_noise_level <= 1.0):
            raise InvalidInputError(
                f"max noise level must be in [0, 1], got {self.max_noise_level}")


class Oracle(ABC):
    """In-process interface every oracle (mock, HTTP client, adapter) implements."""

    @abstractmethod
    def capabilities(self) -> frozenset:
        ...

    def estimate_depth(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inpaint(self, image: np.ndarray, hole_mask: np.ndarray,
                depth_hint: np.ndarray | None = None, prompt: str | None = None) -> np.ndarray:
        raise NotImplementedError

    def undistort(self, request: UndistortRequest) -> np.ndarray:
        raise NotImplementedError

    def match_dense(self, image_a: np.ndarray, image_b: np.ndarray) -> MatchResult:
        raise NotImplementedError

    def caption(self, image: np.ndarray) -> str:
        raise NotImplementedError

    def embed(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tune_adaptation(self, image: np.ndarray, session_id: str) -> str:
        raise NotImplementedError


def require_capabilities(oracle: Oracle, needed) -> None:
    from ..errors import CapabilityMissingError

    missing = frozenset(needed) - oracle.capabilities()
    if missing:
        raise CapabilityMissingError(
            f"oracle lacks required capabilities: {sorted(missing)}")


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatchError(f"image dimensions differ: {a.shape[:2]} vs {b.shape[:2]}")


# ---------------------------------------------------------------------------
# Wire codecs. Envelopes are plain dicts; canonical_json renders them with
# sorted keys and no whitespace so serialization is reproducible.
# ---------------------------------------------------------------------------

def canonical_json(envelope: dict) -> bytes:
    return json.dumps(envelope, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_estimate_depth_request(request_id: str, image) -> dict:
    return {"request_id": request_id, "image": png_b64(image)}


def decode_estimate_depth_request(obj: dict):
    return obj["request_id"], b64_png(obj["image"])


def encode_depth_response(request_id: str, depth) -> dict:
    return {"request_id": request_id, "depth": float32_b64(depth)}


def decode_depth_response(obj: dict):
    return obj["request_id"], b64_float32(obj["depth"])


def encode_inpaint_request(request_id: str, image, hole_mask, depth_hint=None,
                           prompt=None) -> dict:
    return {
        "request_id": request_id,
        "image": png_b64(image),
        "hole_mask": png_b64(np.asarray(hole_mask, dtype=bool)),
        "depth_hint": float32_b64(depth_hint) if depth_hint is not None else None,
        "prompt": prompt,
    }


def decode_inpaint_request(obj: dict):
    depth_hint = b64_float32(obj["depth_hint"]) if obj.get("depth_hint") else None
    return (obj["request_id"], b64_png(obj["image"]), b64_mask(obj["hole_mask"]),
            depth_hint, obj.get("prompt"))


def encode_image_response(request_id: str, image) -> dict:
    return {"request_id": request_id, "image": png_b64(image)}


def decode_image_response(obj: dict):
    return obj["request_id"], b64_png(obj["image"])


def encode_undistort_request(request_id: str, request: UndistortRequest) -> dict:
    return {
        "request_id": request_id,
        "image": png_b64(request.image),
        "max_noise_level": float(request.max_noise_level),
        "foreground_mask": (png_b64(np.asarray(request.foreground_mask, dtype=bool))
                            if request.foreground_mask is not None else None),
        "session_id": request.session_id,
        "seed": request.seed,
    }


def decode_undistort_request(obj: dict):
    mask = b64_mask(obj["foreground_mask"]) if obj.get("foreground_mask") else None
    request = UndistortRequest(
        image=b64_png(obj["image"]),
        max_noise_level=float(obj["max_noise_level"]),
        foreground_mask=mask,
        session_id=obj.get("session_id"),
        seed=obj.get("seed"),
    )
    return obj["request_id"], request


def encode_match_request(request_id: str, image_a, image_b) -> dict:
    return {"request_id": request_id, "image_a": png_b64(image_a), "image_b": png_b64(image_b)}


def decode_match_request(obj: dict):
    return obj["request_id"], b64_png(obj["image_a"]), b64_png(obj["image_b"])


def encode_match_response(request_id: str, match: MatchResult) -> dict:
    return {
        "request_id": request_id,
        "flow": float32_b64(match.flow),
        "confidence": float32_b64(match.confidence),
    }


def decode_match_response(obj: dict):
    return obj["request_id"], MatchResult(flow=b64_float32(obj["flow"]),
                                          confidence=b64_float32(obj["confidence"]))


def encode_caption_response(request_id: str, text: str) -> dict:
    return {"request_id": request_id, "caption": text}


def encode_embed_response(request_id: str, vector) -> dict:
    return {"request_id": request_id, "embedding": float32_b64(vector)}


def decode_embed_response(obj: dict):
    return obj["request_id"], b64_float32(obj["embedding"]).reshape(-1)


def encode_tune_request(request_id: str, image, session_id: str) -> dict:
    return {"request_id": request_id, "image": png_b64(image), "session_id": session_id}


def decode_tune_request(obj: dict):
    return obj["request_id"], b64_png(obj["image"]), obj["session_id"]


def encode_handle_response(request_id: str, handle: str) -> dict:
    return {"request_id": request_id, "handle": handle}


def encode_error(request_id: str, error_type: str, message: str) -> dict:
    return {"request_id": request_id, "error": {"type": error_type, "message": message}}


def luminance_embedding(image: np.ndarray, grid: int = 16) -> np.ndarray:
    """Deterministic stand-in embedding: pooled luminance, unit-normalized."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img @ np.array([0.299, 0.587, 0.114])
    h, w = img.shape
    ys = np.linspace(0, h, grid + 1).astype(int)
    xs = np.linspace(0, w, grid + 1).astype(int)
    pooled = np.empty((grid, grid))
    for i in range(grid):
        for j in range(grid):
            block = img[ys[i]:max(ys[i + 1], ys[i] + 1), xs[j]:max(xs[j + 1], xs[j] + 1)]
            pooled[i, j] = block.mean()
    vec = pooled.ravel()
    norm = np.linalg.norm(vec)
    if norm == 0:
        vec = np.ones_like(vec)
        norm = np.linalg.norm(vec)
    return (vec / norm).astype(np.float32)
