"""End-to-end edit orchestration: view synthesis, undistortion, shape alignment.

One edit session owns a directory. Each loop iteration re-warps the
original image with the current depth, completes the view generatively,
asks the oracle to undistort it at the scheduled noise level, then refines
the depth map from composed correspondences. Depth always lives in the
source frame; intermediate edits are never re-warped, which prevents drift
across iterations.

Session directory layout::

    inputs/    image.png mask.png transform.json intrinsics.json config.json
    background/ color.png depth.f32(.json)
    iter_k/    warped.png synth.png undistorted.png depth_pre.f32
               depth_post.f32 correspondences.csv metrics.json
    session.json
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .alignment import (
    CorrespondenceSet,
    SolverConfig,
    compose_correspondences,
    solve_depth,
)
from .background import inpaint_background_depth
from .errors import (
    DepthEditError,
    EditOutOfFrameError,
    EmptySelectionError,
    InsufficientCorrespondencesError,
    InvalidConfigError,
    InvalidInputError,
    OracleError,
)
from .geometry import CameraIntrinsics, DepthMap, RigidTransform, unproject
from .imgio import load_f32, load_mask, load_png, save_f32, save_png, to_float
from .oracle import Oracle, UndistortRequest, create_oracle, require_capabilities
from .oracle.protocol import PIPELINE_CAPABILITIES, MatchResult
from .warping import (
    WarpConfig,
    WarpResult,
    export_correspondences,
    lift_to_mesh,
    rasterize,
    stretch_mask,
)

DEFAULT_SIGMA_SCHEDULE = (0.5, 0.4, 0.3)


@dataclass(frozen=True)
class EditConfig:
    """Knobs for one edit run; the defaults are the reference settings."""

    iterations: int = 3
    sigma_schedule: tuple = DEFAULT_SIGMA_SCHEDULE
    stretch_threshold: float = 4.0
    correspondence_stride: int = 4
    solver: SolverConfig = field(default_factory=SolverConfig)
    warp: WarpConfig = field(default_factory=WarpConfig)

    def __post_init__(self):
        schedule = tuple(float(s) for s in self.sigma_schedule)
        object.__setattr__(self, "sigma_schedule", schedule)
        if self.iterations < 1:
            raise InvalidConfigError("at least one iteration is required")
        if len(schedule) != self.iterations:
            raise InvalidConfigError(
                f"sigma schedule length {len(schedule)} != iterations {self.iterations}")
        if any(not (0.0 < s <= 1.0) for s in schedule):
            raise InvalidConfigError("sigma values must lie in (0, 1]")
        if any(b > a for a, b in zip(schedule, schedule[1:])):
            raise InvalidConfigError("sigma schedule must be non-increasing")
        if self.stretch_threshold <= 1.0:
            raise InvalidConfigError("stretch threshold must exceed 1")
        if self.correspondence_stride < 1:
            raise InvalidConfigError("correspondence stride must be >= 1")

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "sigma_schedule": list(self.sigma_schedule),
            "stretch_threshold": self.stretch_threshold,
            "correspondence_stride": self.correspondence_stride,
            "solver": {
                "regularization": self.solver.regularization,
                "max_iterations": self.solver.max_iterations,
                "confidence_floor": self.solver.confidence_floor,
            },
            "warp": {
                "discontinuity_threshold": self.warp.discontinuity_threshold,
                "ring_layers": self.warp.ring_layers,
                "ring_deepen_fraction": self.warp.ring_deepen_fraction,
                "ambiguity_dilation": self.warp.ambiguity_dilation,
            },
        }

    @staticmethod
    def from_json(obj: dict) -> "EditConfig":
        solver = SolverConfig(**obj.get("solver", {}))
        warp = WarpConfig(**obj.get("warp", {}))
        return EditConfig(
            iterations=int(obj.get("iterations", 3)),
            sigma_schedule=tuple(obj.get("sigma_schedule", DEFAULT_SIGMA_SCHEDULE)),
            stretch_threshold=float(obj.get("stretch_threshold", 4.0)),
            correspondence_stride=int(obj.get("correspondence_stride", 4)),
            solver=solver,
            warp=warp,
        )


@dataclass
class IterationTrace:
    """Artifacts persisted for one loop iteration."""

    index: int
    sigma: float
    warped: np.ndarray
    synth: np.ndarray
    undistorted: np.ndarray
    depth_pre: np.ndarray
    depth_post: np.ndarray
    correspondences: CorrespondenceSet
    solver_summary: dict
    metrics_report: dict


class _CallLog:
    """Wraps an oracle, recording one row per call for the session manifest."""

    def __init__(self, oracle: Oracle):
        self.inner = oracle
        self.calls: list[dict] = []

    def _log(self, capability):
        self.calls.append({"seq": len(self.calls), "capability": capability})

    def capabilities(self):
        return self.inner.capabilities()

    def estimate_depth(self, image):
        self._log("EstimateDepth")
        return self.inner.estimate_depth(image)

    def inpaint(self, image, hole_mask, depth_hint=None, prompt=None):
        self._log("InpaintImage")
        return self.inner.inpaint(image, hole_mask, depth_hint=depth_hint, prompt=prompt)

    def undistort(self, request):
        self._log("Undistort")
        return self.inner.undistort(request)

    def match_dense(self, image_a, image_b):
        self._log("DenseMatch")
        return self.inner.match_dense(image_a, image_b)

    def caption(self, image):
        self._log("Caption")
        return self.inner.caption(image)

    def embed(self, image):
        self._log("Embed")
        return self.inner.embed(image)

    def tune_adaptation(self, image, session_id):
        self._log("TuneLora")
        return self.inner.tune_adaptation(image, session_id)


class EditSession:
    """State machine for one edit, persisted under ``root``."""

    def __init__(self, root: Path, session_id: str, image: np.ndarray, mask: np.ndarray,
                 transform: RigidTransform, intrinsics: CameraIntrinsics,
                 config: EditConfig, oracle: Oracle, oracle_spec: str = "custom"):
        if not mask.any():
            raise EmptySelectionError("selection mask is empty")
        if mask.all():
            raise InvalidInputError("selection mask covers the whole image")
        if image.shape[:2] != mask.shape:
            raise InvalidInputError("image and mask dimensions must agree")
        self.root = Path(root)
        self.id = session_id
        self.image = to_float(image)
        self.mask = np.asarray(mask, dtype=bool)
        self.user_transform = transform
        self.transform = transform  # pivot resolved during prepare()
        self.intrinsics = intrinsics
        self.config = config
        self.oracle = _CallLog(oracle)
        self.oracle_spec = oracle_spec
        self.status = "created"
        self.error: str | None = None
        self.depth: DepthMap | None = None
        self.background_color: np.ndarray | None = None
        self.background_depth: DepthMap | None = None
        self.adaptation_handle: str | None = None
        self.caption_text: str | None = None
        self.traces: list[IterationTrace] = []
        self.created_at = time.time()

    # -- persistence -------------------------------------------------------

    def write_inputs(self):
        inputs = self.root / "inputs"
        inputs.mkdir(parents=True, exist_ok=True)
        save_png(inputs / "image.png", self.image)
        save_png(inputs / "mask.png", self.mask)
        (inputs / "transform.json").write_text(
            json.dumps(self.user_transform.to_json(), indent=2), encoding="utf-8")
        (inputs / "intrinsics.json").write_text(
            json.dumps(self.intrinsics.to_json(), indent=2), encoding="utf-8")
        (inputs / "config.json").write_text(
            json.dumps(self.config.to_json(), indent=2), encoding="utf-8")
        self.save_manifest()

    def input_hashes(self) -> dict:
        inputs = self.root / "inputs"
        hashes = {}
        for name in ("image.png", "mask.png", "transform.json", "intrinsics.json"):
            path = inputs / name
            if path.exists():
                hashes[name] = hashlib.sha256(path.read_bytes()).hexdigest()[:16]
        return hashes

    def save_manifest(self):
        manifest = {
            "id": self.id,
            "status": self.status,
            "error": self.error,
            "config": self.config.to_json(),
            "oracle": self.oracle_spec,
            "input_hashes": self.input_hashes(),
            "iterations_done": len(self.traces),
            "resolved_transform": (self.transform.to_json()
                                   if not self.transform.has_symbolic_pivot else None),
            "oracle_calls": self.oracle.calls,
            "created_at": self.created_at,
            "updated_at": time.time(),
        }
        tmp = self.root / "session.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        tmp.replace(self.root / "session.json")

    def _write_trace(self, trace: IterationTrace):
        d = self.root / f"iter_{trace.index}"
        d.mkdir(parents=True, exist_ok=True)
        save_png(d / "warped.png", trace.warped)
        save_png(d / "synth.png", trace.synth)
        save_png(d / "undistorted.png", trace.undistorted)
        save_f32(d / "depth_pre.f32", trace.depth_pre)
        save_f32(d / "depth_post.f32", trace.depth_post)
        (d / "correspondences.csv").write_text(trace.correspondences.to_csv(), encoding="utf-8")
        payload = {"sigma": trace.sigma, "solver": trace.solver_summary,
                   "metrics": trace.metrics_report,
                   "correspondence_count": len(trace.correspondences)}
        (d / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True),
                                        encoding="utf-8")

    # -- phases -------------------------------------------------------------

    def object_centroid(self) -> np.ndarray:
        mv, mu = np.nonzero(self.mask & self.depth.valid_mask)
        pts = unproject(np.stack([mu, mv], axis=1).astype(np.float64),
                        self.depth.values[mv, mu], self.intrinsics)
        return pts.mean(axis=0)

    def prepare(self) -> "EditSession":
        """Depth estimation, adaptation tuning, one-time background completion."""
        if self.background_color is not None:
            return self  # idempotent
        require_capabilities(self.oracle.inner, PIPELINE_CAPABILITIES)
        self.status = "preparing"
        self.save_manifest()

        depth_values = self.oracle.estimate_depth(self.image)
        self.depth = DepthMap(values=np.asarray(depth_values, dtype=np.float64),
                              intrinsics=self.intrinsics)
        self.caption_text = self.oracle.caption(self.image)
        self.adaptation_handle = self.oracle.tune_adaptation(self.image, self.id)
        if self.transform.has_symbolic_pivot:
            self.transform = self.transform.resolve_pivot(self.object_centroid())

        self.background_depth = inpaint_background_depth(self.depth, self.mask)
        self.background_color = self.oracle.inpaint(
            self.image, self.mask,
            depth_hint=self.background_depth.values.astype(np.float32),
            prompt=self.caption_text)

        bg_dir = self.root / "background"
        bg_dir.mkdir(parents=True, exist_ok=True)
        save_png(bg_dir / "color.png", self.background_color)
        save_f32(bg_dir / "depth.f32", self.background_depth.values)
        save_f32(bg_dir / "source_depth.f32", self.depth.values)
        self.save_manifest()
        return self

    def synth_view(self) -> tuple[np.ndarray, np.ndarray, WarpResult]:
        """Warp the selection with the current depth and complete the view.

        Returns (pre-inpaint composite, completed view, warp result).
        """
        mesh = lift_to_mesh(self.image, self.mask, self.depth, self.config.warp)
        result = rasterize(mesh, self.transform, self.intrinsics, self.config.warp)
        if not result.visible_mask.any():
            raise EditOutOfFrameError("transform moved the selection entirely out of view")
        _, result = stretch_mask(result, self.config.stretch_threshold)
        if not result.visible_mask.any():
            raise EditOutOfFrameError("every warped pixel was over-stretched")

        composite = self.background_color.copy()
        composite[result.visible_mask] = result.image[result.visible_mask]
        completed = self.oracle.inpaint(
            composite, result.ambiguous_mask,
            depth_hint=self._composite_depth(result), prompt=self.caption_text)
        return composite, completed, result

    def _composite_depth(self, result: WarpResult) -> np.ndarray:
        depth = self.background_depth.values.astype(np.float32).copy()
        vis = result.visible_mask
        depth[vis] = result.target_depth[vis].astype(np.float32)
        return depth

    def run_edit(self) -> tuple[np.ndarray, list[IterationTrace]]:
        """Full iterative loop; returns the last undistorted image and traces."""
        if self.background_color is None:
            self.prepare()
        final = self.image
        try:
            for index, sigma in enumerate(self.config.sigma_schedule):
                self.status = f"iterating:{index}"
                self.save_manifest()
                final = self._iterate(index, sigma)
            self.status = "done"
            self.error = None
        except DepthEditError as exc:
            self.status = "failed"
            self.error = f"{type(exc).__name__}: {exc}"
            self.save_manifest()
            raise
        self.save_manifest()
        return final, self.traces

    def _iterate(self, index: int, sigma: float) -> np.ndarray:
        composite, synth, warp_result = self.synth_view()
        region = warp_result.visible_mask | warp_result.ambiguous_mask
        undistorted = self.oracle.undistort(UndistortRequest(
            image=synth, max_noise_level=sigma, foreground_mask=region, session_id=self.id))

        depth_pre = self.depth
        warp_pairs = export_correspondences(warp_result, self.config.correspondence_stride)
        match = self.oracle.match_dense(synth, undistorted)
        solver_summary: dict = {}
        composed = warp_pairs
        try:
            match_pairs = _match_to_pairs(match, warp_pairs)
            composed = compose_correspondences(
                warp_pairs, match_pairs, self.config.solver.confidence_floor)
            solved, report = solve_depth(self.depth, self.transform, self.intrinsics,
                                         composed, self.mask, self.config.solver)
            self.depth = solved
            solver_summary = report.summary()
        except InsufficientCorrespondencesError as exc:
            # Degraded mode: keep the current depth, continue iterating.
            solver_summary = {"skipped": True, "reason": str(exc)}

        metric_match = self.oracle.match_dense(self.image, undistorted)
        report_obj = metrics.report(self.image, undistorted, metric_match,
                                    region, self.oracle.inner)

        trace = IterationTrace(
            index=index, sigma=sigma, warped=composite, synth=synth,
            undistorted=undistorted,
            depth_pre=depth_pre.values.astype(np.float32),
            depth_post=self.depth.values.astype(np.float32),
            correspondences=composed, solver_summary=solver_summary,
            metrics_report=report_obj.to_json())
        self._write_trace(trace)
        self.traces.append(trace)
        self.save_manifest()
        return undistorted


def _match_to_pairs(match: MatchResult, warp_pairs: CorrespondenceSet) -> CorrespondenceSet:
    """Sample the dense flow at the warp pairs' intermediate pixels."""
    h, w = match.confidence.shape
    pu = np.clip(np.round(warp_pairs.target[:, 0]).astype(np.int64), 0, w - 1)
    pv = np.clip(np.round(warp_pairs.target[:, 1]).astype(np.int64), 0, h - 1)
    source = np.stack([pu, pv], axis=1).astype(np.float64)
    target = source + match.flow[pv, pu]
    confidence = match.confidence[pv, pu]
    return CorrespondenceSet(source=source, target=target, confidence=confidence)


def create_session(root, image, mask, transform, intrinsics=None,
                   config: EditConfig | None = None, oracle_spec: str = "mock:identity",
                   oracle: Oracle | None = None, session_id: str | None = None) -> EditSession:
    """Create and persist a new session directory."""
    root = Path(root)
    image = to_float(image)
    if intrinsics is None:
        intrinsics = CameraIntrinsics.default(image.shape[1], image.shape[0])
    if oracle is None:
        oracle = create_oracle(oracle_spec, request_prefix=session_id)
    config = config or EditConfig()
    session = EditSession(root=root, session_id=session_id or root.name, image=image,
                          mask=np.asarray(mask, dtype=bool), transform=transform,
                          intrinsics=intrinsics, config=config, oracle=oracle,
                          oracle_spec=oracle_spec)
    session.write_inputs()
    return session


def load_session(root, oracle: Oracle | None = None) -> EditSession:
    """Rehydrate a persisted session (inputs plus manifest; traces stay on disk)."""
    root = Path(root)
    manifest = json.loads((root / "session.json").read_text(encoding="utf-8"))
    inputs = root / "inputs"
    image = load_png(inputs / "image.png")
    mask = load_mask(inputs / "mask.png")
    transform = RigidTransform.from_json(
        json.loads((inputs / "transform.json").read_text(encoding="utf-8")))
    intrinsics = CameraIntrinsics.from_json(
        json.loads((inputs / "intrinsics.json").read_text(encoding="utf-8")))
    config = EditConfig.from_json(
        json.loads((inputs / "config.json").read_text(encoding="utf-8")))
    spec = manifest.get("oracle", "mock:identity")
    if oracle is None:
        if spec == "custom":
            raise InvalidInputError(
                "session was created with an in-process oracle; pass one to load_session")
        oracle = create_oracle(spec, request_prefix=manifest["id"])
    session = EditSession(root=root, session_id=manifest["id"], image=image, mask=mask,
                          transform=transform, intrinsics=intrinsics, config=config,
                          oracle=oracle, oracle_spec=spec)
    session.status = manifest.get("status", "created")
    session.error = manifest.get("error")
    if manifest.get("resolved_transform"):
        session.transform = RigidTransform.from_json(manifest["resolved_transform"])
    bg_color = root / "background" / "color.png"
    if bg_color.exists():
        session.background_color = load_png(bg_color)
        session.background_depth = DepthMap(
            values=load_f32(root / "background" / "depth.f32").astype(np.float64),
            intrinsics=intrinsics)
        # Current depth: last iteration's refined depth, else the prepare-time estimate.
        iters = sorted(root.glob("iter_*"), key=lambda p: int(p.name.split("_")[1]))
        if iters:
            session.depth = DepthMap(
                values=load_f32(iters[-1] / "depth_post.f32").astype(np.float64),
                intrinsics=intrinsics)
        elif (root / "background" / "source_depth.f32").exists():
            session.depth = DepthMap(
                values=load_f32(root / "background" / "source_depth.f32").astype(np.float64),
                intrinsics=intrinsics)
    return session


def build_preview_mesh(image, mask, depth: DepthMap | None = None,
                       intrinsics: CameraIntrinsics | None = None,
                       config: WarpConfig | None = None, fallback_depth: float = 2.0):
    """Lift the selection once for repeated previews under changing transforms.

    Without a depth map the selection is treated as a fronto-parallel plane
    at ``fallback_depth`` meters, enough for gizmo dragging before a run.
    """
    image = to_float(image)
    mask = np.asarray(mask, dtype=bool)
    if intrinsics is None:
        intrinsics = CameraIntrinsics.default(image.shape[1], image.shape[0])
    if depth is None:
        depth = DepthMap(values=np.full(mask.shape, fallback_depth), intrinsics=intrinsics)
    return lift_to_mesh(image, mask, depth, config or WarpConfig())


def preview_warp(image, mask, transform, depth: DepthMap | None = None,
                 intrinsics: CameraIntrinsics | None = None,
                 config: WarpConfig | None = None,
                 background: np.ndarray | None = None,
                 fallback_depth: float = 2.0, mesh=None) -> np.ndarray:
    """Geometry-only warp composite for interactive feedback; no oracle calls.

    A completed background plate is used when available; otherwise the
    vacated selection area is dimmed to hint at the pending removal. Pass a
    prebuilt ``mesh`` (see :func:`build_preview_mesh`) to skip the lift when
    only the transform changes between calls.
    """
    from .warping import warp_image_only

    image = to_float(image)
    mask = np.asarray(mask, dtype=bool)
    if intrinsics is None:
        intrinsics = CameraIntrinsics.default(image.shape[1], image.shape[0])
    if mesh is None:
        mesh = build_preview_mesh(image, mask, depth, intrinsics, config, fallback_depth)
    warped, vis = warp_image_only(mesh, transform, intrinsics)
    if background is not None:
        composite = to_float(background).copy()
    else:
        composite = image.copy()
        composite[mask & ~vis] *= 0.35
    composite[vis] = warped[vis]
    return composite
