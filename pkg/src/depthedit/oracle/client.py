"""HTTP client implementing the Oracle interface against a remote /v1/ service."""

from __future__ import annotations

import itertools
import secrets

import httpx

from ..errors import (
    CapabilityMissingError,
    OracleError,
    OracleTimeoutError,
    OracleTransportError,
    ProtocolError,
)
from . import protocol
from .protocol import DEFAULT_TIMEOUT_S, Oracle, UndistortRequest

_ERROR_TYPES = {
    "CapabilityMissingError": CapabilityMissingError,
}


class HttpOracle(Oracle):
    """Talks the JSON/base64 wire protocol; one retry on transport failure.

    Request ids default to a random prefix plus a counter; pipelines that
    need reproducible call logs set ``request_prefix`` explicitly.
    """

    def __init__(self, base_url: str = "", timeout: float = DEFAULT_TIMEOUT_S,
                 request_prefix: str | None = None, client: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.request_prefix = request_prefix or secrets.token_hex(4)
        self._counter = itertools.count()
        # An injected client (e.g. an ASGI test client) already carries its base URL.
        self._client = client or httpx.Client(base_url=self.base_url, timeout=timeout)
        self._capabilities = None

    def next_request_id(self) -> str:
        return f"{self.request_prefix}-{next(self._counter):05d}"

    def close(self):
        self._client.close()

    def _post(self, path: str, envelope: dict) -> dict:
        last_exc = None
        for attempt in range(2):  # one retry on transport failure
            try:
                response = self._client.post(path, json=envelope)
                break
            except httpx.TimeoutException as exc:
                last_exc = OracleTimeoutError(f"oracle call {path} timed out: {exc}")
            except httpx.TransportError as exc:
                last_exc = OracleTransportError(f"oracle call {path} failed: {exc}")
        else:
            raise last_exc
        body = response.json()
        if "error" in body:
            err = body["error"]
            exc_type = _ERROR_TYPES.get(err.get("type"), OracleError)
            raise exc_type(f"{err.get('type')}: {err.get('message')}")
        if response.status_code != 200:
            raise ProtocolError(f"unexpected status {response.status_code} from {path}")
        return body

    def capabilities(self) -> frozenset:
        if self._capabilities is None:
            try:
                response = self._client.get("/v1/capabilities")
            except httpx.TransportError as exc:
                raise OracleTransportError(f"capability negotiation failed: {exc}")
            self._capabilities = frozenset(response.json()["capabilities"])
        return self._capabilities

    def estimate_depth(self, image):
        rid = self.next_request_id()
        body = self._post("/v1/estimate_depth",
                          protocol.encode_estimate_depth_request(rid, image))
        _, depth = protocol.decode_depth_response(body)
        return depth

    def inpaint(self, image, hole_mask, depth_hint=None, prompt=None):
        rid = self.next_request_id()
        body = self._post("/v1/inpaint",
                          protocol.encode_inpaint_request(rid, image, hole_mask,
                                                          depth_hint, prompt))
        _, out = protocol.decode_image_response(body)
        return out

    def undistort(self, request: UndistortRequest):
        rid = self.next_request_id()
        body = self._post("/v1/undistort", protocol.encode_undistort_request(rid, request))
        _, out = protocol.decode_image_response(body)
        return out

    def match_dense(self, image_a, image_b):
        rid = self.next_request_id()
        body = self._post("/v1/match_dense",
                          protocol.encode_match_request(rid, image_a, image_b))
        _, match = protocol.decode_match_response(body)
        return match

    def caption(self, image):
        rid = self.next_request_id()
        body = self._post("/v1/caption", protocol.encode_estimate_depth_request(rid, image))
        return body["caption"]

    def embed(self, image):
        rid = self.next_request_id()
        body = self._post("/v1/embed", protocol.encode_estimate_depth_request(rid, image))
        _, vec = protocol.decode_embed_response(body)
        return vec

    def tune_adaptation(self, image, session_id):
        rid = self.next_request_id()
        body = self._post("/v1/tune_adaptation",
                          protocol.encode_tune_request(rid, image, session_id))
        return body["handle"]
