"""Deterministic mock oracles: cheap identity behavior and scene-backed ground truth."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import InvalidInputError
from ..imgio import to_float
from .protocol import (
    ALL_CAPABILITIES,
    MatchResult,
    Oracle,
    UndistortRequest,
    check_same_shape,
    luminance_embedding,
)
from .scene import OBJECT_ID_THRESHOLD, Scene, SceneConfig

IDENTITY_CAPTION = "a photograph of a scene"


class IdentityOracle(Oracle):
    """Degenerate oracle for plumbing tests: every step is (near-)identity.

    Depth is a constant 2 m plane, inpainting copies the nearest known
    pixel, undistortion returns its input at every noise level, and
    matching reports zero flow with full confidence.
    """

    def capabilities(self) -> frozenset:
        return ALL_CAPABILITIES

    def estimate_depth(self, image):
        img = to_float(image)
        return np.full(img.shape[:2], 2.0, dtype=np.float64)

    def inpaint(self, image, hole_mask, depth_hint=None, prompt=None):
        img = to_float(image).copy()
        hole = np.asarray(hole_mask, dtype=bool)
        check_same_shape(img, hole)
        if not hole.any():
            return img
        if hole.all():
            raise InvalidInputError("hole covers the entire image")
        _, (ir, ic) = ndimage.distance_transform_edt(hole, return_indices=True)
        img[hole] = img[ir, ic][hole]
        return img

    def undistort(self, request: UndistortRequest):
        return to_float(request.image).copy()

    def match_dense(self, image_a, image_b):
        a = to_float(image_a)
        check_same_shape(a, to_float(image_b))
        h, w = a.shape[:2]
        return MatchResult(flow=np.zeros((h, w, 2)), confidence=np.ones((h, w)))

    def caption(self, image):
        return IDENTITY_CAPTION

    def embed(self, image):
        return luminance_embedding(to_float(image))

    def tune_adaptation(self, image, session_id):
        return "identity-adaptation"


class SceneOracle(Oracle):
    """Oracle backed by a ground-truth rendered scene.

    Depth estimation returns the scene's (optionally perturbed) source
    depth, inpainting fills holes from the object-free background plate,
    undistortion blends toward the ground-truth target rendering inside
    the mask with weight sigma, and dense matching decodes the object's
    coordinate texture and forward-maps it through the true geometry.
    """

    def __init__(self, scene: Scene):
        self.scene = scene

    @staticmethod
    def from_config_file(path) -> "SceneOracle":
        return SceneOracle(Scene(SceneConfig.load(path)))

    def capabilities(self) -> frozenset:
        return ALL_CAPABILITIES

    def _check_dims(self, image):
        img = to_float(image)
        cam = self.scene.cam
        if img.shape[:2] != (cam.height, cam.width):
            raise InvalidInputError(
                f"image {img.shape[:2]} does not match the scene {cam.height}x{cam.width}")
        return img

    def estimate_depth(self, image):
        self._check_dims(image)
        return self.scene.estimated_depth()

    def inpaint(self, image, hole_mask, depth_hint=None, prompt=None):
        img = self._check_dims(image).copy()
        hole = np.asarray(hole_mask, dtype=bool)
        check_same_shape(img, hole)
        img[hole] = self.scene.background().image[hole]
        return img

    def undistort(self, request: UndistortRequest):
        img = self._check_dims(request.image).copy()
        sigma = request.max_noise_level
        if sigma == 0.0:
            return img
        target = self.scene.target().image
        if request.foreground_mask is None:
            mask = np.ones(img.shape[:2], dtype=bool)
        else:
            mask = np.asarray(request.foreground_mask, dtype=bool)
            check_same_shape(img, mask)
        img[mask] = (1.0 - sigma) * img[mask] + sigma * target[mask]
        return img

    def _verify_candidate(self, b, su, sv, cu, cv, tol):
        """Does frame b actually show source point (su,sv) at candidate (cu,cv)?

        Decodes b at the rounded candidate; accepted when the decoded source
        coordinates agree within ``tol`` pixels. Blends (partial undistortion)
        keep the id channel detectable but displace decoded coordinates, so
        ghosted regions fail verification and drop to confidence 0, like a
        real matcher losing confidence in ambiguous areas.
        """
        h, w = b.shape[:2]
        inside = (cu >= 0) & (cu <= w - 1) & (cv >= 0) & (cv <= h - 1)
        bi = np.clip(np.round(cv).astype(np.int64), 0, h - 1)
        bj = np.clip(np.round(cu).astype(np.int64), 0, w - 1)
        id_channel = b[..., 2][bi, bj]
        decoded_u = b[..., 0][bi, bj] * (self.scene.cam.width - 1)
        decoded_v = b[..., 1][bi, bj] * (self.scene.cam.height - 1)
        agree = np.hypot(decoded_u - su, decoded_v - sv) <= tol
        return inside & (id_channel >= OBJECT_ID_THRESHOLD * 0.5) & agree

    def match_dense(self, image_a, image_b, coordinate_tolerance: float = 3.0):
        a = self._check_dims(image_a)
        b = self._check_dims(image_b)
        check_same_shape(a, b)
        h, w = a.shape[:2]
        decodable, su, sv = self.scene.decode_object_pixels(a)
        ok_geom, gu, gv = self.scene.gt_target_position(su, sv)

        # Candidate 1: the point moved with the edit (frame b at target pose).
        cand_target = decodable & ok_geom & self._verify_candidate(
            b, su, sv, gu, gv, coordinate_tolerance)
        # Candidate 2: the point did not move (frame b still at source pose).
        cand_source = decodable & self._verify_candidate(
            b, su, sv, su, sv, coordinate_tolerance)

        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        flow = np.zeros((h, w, 2))
        flow[..., 0] = np.where(cand_target, gu - xx, np.where(cand_source, su - xx, 0.0))
        flow[..., 1] = np.where(cand_target, gv - yy, np.where(cand_source, sv - yy, 0.0))
        confidence = (cand_target | cand_source).astype(np.float64)
        return MatchResult(flow=flow, confidence=confidence)

    def caption(self, image):
        return self.scene.config.caption_text

    def embed(self, image):
        return luminance_embedding(to_float(image))

    def tune_adaptation(self, image, session_id):
        return f"scene-adaptation-{session_id}"
