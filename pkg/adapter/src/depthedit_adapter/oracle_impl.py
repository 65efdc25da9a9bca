"""The adapter's Oracle implementation: capability assembly and dispatch.

Each capability is backed by whatever the manifest configures. Backends
that fail to load withdraw their capability from the advertised set rather
than failing the whole adapter, per the protocol contract.
"""

from __future__ import annotations

import numpy as np

from depthedit.errors import CapabilityMissingError, InvalidInputError
from depthedit.imgio import to_float
from depthedit.oracle import protocol
from depthedit.oracle.protocol import MatchResult, Oracle, UndistortRequest, check_same_shape

from .backend import BackendLoadError, load_diffusion_backend
from .engine import DiffusionEngine
from .manifest import Manifest

FIXED_CAPTION = "a photograph"


class AdapterOracle(Oracle):
    """Protocol-conformant oracle wrapping configured model backends."""

    def __init__(self, manifest: Manifest | None = None):
        self.manifest = manifest or Manifest.default()
        self._capabilities = set()
        self.engine = None
        self.load_errors: dict[str, str] = {}

        try:
            backend = load_diffusion_backend(self.manifest.diffusion_model)
            self.engine = DiffusionEngine(backend, self.manifest)
            self._capabilities |= {protocol.UNDISTORT, protocol.INPAINT_IMAGE,
                                   protocol.TUNE_LORA}
        except BackendLoadError as exc:
            self.load_errors["diffusion"] = str(exc)

        self._depth = self._resolve_simple(self.manifest.depth_model, "builtin:constant",
                                           protocol.ESTIMATE_DEPTH, "depth")
        self._match = self._resolve_simple(self.manifest.matcher_model, "builtin:zero-flow",
                                           protocol.DENSE_MATCH, "matcher")
        self._caption = self._resolve_simple(self.manifest.caption_model, "builtin:fixed",
                                             protocol.CAPTION, "caption")
        self._embed = self._resolve_simple(self.manifest.embed_model, "builtin:luminance",
                                           protocol.EMBED, "embed")
        # Remember captions per session so undistortion conditioning matches tuning.
        self._session_captions: dict[str, str] = {}

    def _resolve_simple(self, spec: str, builtin_name: str, capability: str, kind: str):
        if spec == builtin_name:
            self._capabilities.add(capability)
            return spec
        self.load_errors[kind] = (
            f"cannot load {spec!r}: no checkpoint loader configured on this host")
        return None

    def capabilities(self) -> frozenset:
        return frozenset(self._capabilities)

    def queue_depth(self) -> int:
        return self.engine.queue_depth() if self.engine is not None else 0

    def _require(self, capability):
        if capability not in self._capabilities:
            raise CapabilityMissingError(f"{capability} withdrawn: "
                                         f"{self.load_errors or 'not configured'}")

    # -- generative capabilities ----------------------------------------------

    def undistort(self, request: UndistortRequest):
        self._require(protocol.UNDISTORT)
        return self.engine.undistort(request)

    def inpaint(self, image, hole_mask, depth_hint=None, prompt=None):
        self._require(protocol.INPAINT_IMAGE)
        img = to_float(image)
        hole = np.asarray(hole_mask, dtype=bool)
        check_same_shape(img, hole)
        if hole.all():
            raise InvalidInputError("hole covers the entire image")
        return self.engine.inpaint(img, hole, depth_hint=depth_hint, prompt=prompt)

    def tune_adaptation(self, image, session_id):
        self._require(protocol.TUNE_LORA)
        caption = self.caption(image) if protocol.CAPTION in self._capabilities \
            else FIXED_CAPTION
        self._session_captions[session_id] = caption
        return self.engine.tune(to_float(image), session_id, caption)

    # -- perception capabilities ------------------------------------------------

    def estimate_depth(self, image):
        self._require(protocol.ESTIMATE_DEPTH)
        img = to_float(image)
        return np.full(img.shape[:2], 2.0, dtype=np.float64)

    def match_dense(self, image_a, image_b):
        self._require(protocol.DENSE_MATCH)
        a = to_float(image_a)
        check_same_shape(a, to_float(image_b))
        h, w = a.shape[:2]
        return MatchResult(flow=np.zeros((h, w, 2)), confidence=np.ones((h, w)))

    def caption(self, image):
        self._require(protocol.CAPTION)
        return FIXED_CAPTION

    def embed(self, image):
        self._require(protocol.EMBED)
        return protocol.luminance_embedding(to_float(image))
