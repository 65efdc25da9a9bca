"""Depth-based forward warping of a selected object.

The selection is lifted to a textured triangle mesh (one vertex per pixel,
two triangles per quad), transformed, and rasterized from the same camera.
Beyond the warped colors, the rasterization exports per-pixel source
coordinates, a stretch field, and masks separating confidently warped
pixels from ambiguous ones that later need generative inpainting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .alignment import CorrespondenceSet
from .errors import EmptySelectionError, InvalidConfigError, InvalidInputError
from .geometry import CameraIntrinsics, DepthMap, RigidTransform, apply_transform, unproject
from .raster import rasterize_attributes


@dataclass(frozen=True)
class WarpConfig:
    """Tunables for mesh construction and mask handling."""

    stretch_threshold: float = 4.0
    # Relative depth jump between quad corners above which the quad is dropped.
    discontinuity_threshold: float = 0.10
    # Replicated edge layers modelling object thickness, each deepened by
    # deepen_fraction of the local depth per layer.
    ring_layers: int = 2
    ring_deepen_fraction: float = 0.05
    # Dilation radius (pixels) of the warped silhouette added to the ambiguous mask.
    ambiguity_dilation: int = 3


@dataclass(frozen=True)
class TexturedDepthMesh:
    """Per-pixel mesh of the selection, in source-camera space."""

    vertices: np.ndarray        # (V, 3) camera-frame positions
    source_uv: np.ndarray       # (V, 2) image-plane provenance of each vertex
    colors: np.ndarray          # (V, 3) RGB in [0, 1]
    triangles: np.ndarray       # (T, 3) vertex indices, core triangles first
    source_mask: np.ndarray     # (H, W) original selection
    intrinsics: CameraIntrinsics
    core_vertex: np.ndarray     # (V,) True for vertices inside the selection
    core_triangle: np.ndarray   # (T,) True when all corners are selection pixels

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def centroid(self) -> np.ndarray:
        core = self.vertices[self.core_vertex]
        if core.shape[0] == 0:
            core = self.vertices
        return core.mean(axis=0)


@dataclass(frozen=True)
class StretchField:
    """Per-target-pixel stretch ratio; NaN where the ratio is undefined."""

    values: np.ndarray  # (H, W) float32


@dataclass(frozen=True)
class WarpResult:
    """Forward-warp output in the target view."""

    image: np.ndarray            # (H, W, 3) float32, zeros where nothing landed
    visible_mask: np.ndarray     # pixels confidently covered by selection content
    ambiguous_mask: np.ndarray   # pixels that may be foreground or background
    stretch: StretchField
    correspondence: np.ndarray   # (H, W, 2) source (u, v) per target pixel, NaN outside visible
    target_depth: np.ndarray     # (H, W) float32, NaN outside visible
    source_mask: np.ndarray      # original selection, for downstream mask algebra

    def __post_init__(self):
        if np.any(self.visible_mask & self.ambiguous_mask):
            raise InvalidInputError("visible and ambiguous masks must be disjoint")


def lift_to_mesh(image: np.ndarray, mask: np.ndarray, depth: DepthMap,
                 config: WarpConfig = WarpConfig()) -> TexturedDepthMesh:
    """Lift selected pixels to a textured mesh, adding a deepened boundary ring.

    Quads whose corners span a relative depth jump above
    ``config.discontinuity_threshold`` are dropped to avoid rubber-sheeting
    across depth edges.
    """
    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if image.shape[:2] != (h, w) or depth.values.shape != (h, w):
        raise InvalidInputError("image, mask and depth dimensions must agree")
    core = mask & depth.valid_mask
    if not core.any():
        raise EmptySelectionError("selection mask is empty or has no valid depth")

    vert_depth = np.where(core, depth.values.astype(np.float64), np.nan)
    vert_color = image.astype(np.float64).copy()
    valid = core.copy()

    if config.ring_layers > 0:
        # Replicate the nearest selected pixel outward, deepening each layer.
        _, (src_r, src_c) = ndimage.distance_transform_edt(~core, return_indices=True)
        grown = core.copy()
        for layer in range(1, config.ring_layers + 1):
            grown_next = ndimage.binary_dilation(grown, structure=np.ones((3, 3), dtype=bool))
            ring = grown_next & ~grown
            base = depth.values.astype(np.float64)[src_r[ring], src_c[ring]]
            vert_depth[ring] = base * (1.0 + config.ring_deepen_fraction * layer)
            vert_color[ring] = image[src_r[ring], src_c[ring]].astype(np.float64)
            valid |= ring
            grown = grown_next

    vv, uu = np.nonzero(valid)
    index_grid = np.full((h, w), -1, dtype=np.int64)
    index_grid[vv, uu] = np.arange(vv.size)

    pix = np.stack([uu.astype(np.float64), vv.astype(np.float64)], axis=1)
    vertices = unproject(pix, vert_depth[vv, uu], depth.intrinsics)
    colors = vert_color[vv, uu]
    core_vertex = core[vv, uu]

    # Quads with all four corners valid become two triangles.
    q = valid[:-1, :-1] & valid[:-1, 1:] & valid[1:, :-1] & valid[1:, 1:]
    qv, qu = np.nonzero(q)
    if qv.size:
        d00 = vert_depth[qv, qu]
        d01 = vert_depth[qv, qu + 1]
        d10 = vert_depth[qv + 1, qu]
        d11 = vert_depth[qv + 1, qu + 1]
        dmin = np.minimum(np.minimum(d00, d01), np.minimum(d10, d11))
        dmax = np.maximum(np.maximum(d00, d01), np.maximum(d10, d11))
        keep = (dmax - dmin) / dmin <= config.discontinuity_threshold
        qv, qu = qv[keep], qu[keep]
    # Core quads (fully inside the selection) come first: depth ties at
    # shared vertices then resolve to confident selection content.
    quad_core = core[qv, qu] & core[qv, qu + 1] & core[qv + 1, qu] & core[qv + 1, qu + 1]
    order = np.argsort(~quad_core, kind="stable")
    qv, qu, quad_core = qv[order], qu[order], quad_core[order]
    i00 = index_grid[qv, qu]
    i01 = index_grid[qv, qu + 1]
    i10 = index_grid[qv + 1, qu]
    i11 = index_grid[qv + 1, qu + 1]
    tris = np.empty((2 * i00.size, 3), dtype=np.int64)
    tris[0::2] = np.stack([i00, i01, i10], axis=1)
    tris[1::2] = np.stack([i01, i11, i10], axis=1)
    tri_core = np.repeat(quad_core, 2)

    return TexturedDepthMesh(vertices=vertices, source_uv=pix, colors=colors,
                             triangles=tris, source_mask=mask,
                             intrinsics=depth.intrinsics, core_vertex=core_vertex,
                             core_triangle=tri_core)


def rasterize(mesh: TexturedDepthMesh, transform: RigidTransform,
              intrinsics: CameraIntrinsics | None = None,
              config: WarpConfig = WarpConfig()) -> WarpResult:
    """Render the transformed mesh from the target viewpoint.

    A symbolic ``object-centroid`` pivot is resolved against the mesh
    centroid. Pixels whose interpolated provenance falls outside the
    selection (thickness-ring content) count as ambiguous, not visible.
    """
    cam = intrinsics or mesh.intrinsics
    transform = transform.resolve_pivot(mesh.centroid())
    moved = apply_transform(transform, mesh.vertices)

    attrs = np.concatenate([mesh.colors, mesh.source_uv], axis=1)
    zbuf, tri_id, attr = rasterize_attributes(
        moved, attrs, mesh.triangles,
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)

    covered = tri_id >= 0
    image = np.where(covered[..., None], attr[..., 0:3], 0.0).astype(np.float32)
    src_uv = attr[..., 3:5].copy()

    h, w = mesh.source_mask.shape
    su = np.clip(np.round(src_uv[..., 0]).astype(np.int64), 0, w - 1)
    sv = np.clip(np.round(src_uv[..., 1]).astype(np.int64), 0, h - 1)
    provenance_in_mask = mesh.source_mask[sv, su]
    # Confidently-foreground pixels come from triangles fully inside the
    # selection; silhouette slivers and thickness-ring coverage stay ambiguous.
    from_core = np.zeros_like(covered)
    if mesh.core_triangle.size:
        from_core[covered] = mesh.core_triangle[tri_id[covered]]
    visible = covered & provenance_in_mask & from_core

    src_uv[~visible] = np.nan
    target_depth = np.where(visible, zbuf, np.nan).astype(np.float32)

    silhouette_band = ndimage.binary_dilation(
        visible, structure=np.ones((3, 3), dtype=bool), iterations=config.ambiguity_dilation)
    ambiguous = (mesh.source_mask | silhouette_band | covered) & ~visible

    stretch = _stretch_field(src_uv, visible)
    return WarpResult(image=image, visible_mask=visible, ambiguous_mask=ambiguous,
                      stretch=stretch, correspondence=src_uv.astype(np.float32),
                      target_depth=target_depth, source_mask=mesh.source_mask)


def warp_image_only(mesh: TexturedDepthMesh, transform: RigidTransform,
                    intrinsics: CameraIntrinsics | None = None):
    """Fast path for interactive previews: warped image and visibility only.

    Skips the stretch field and ambiguity analysis; otherwise agrees with
    :func:`rasterize` on the visible pixels bit for bit.
    """
    cam = intrinsics or mesh.intrinsics
    transform = transform.resolve_pivot(mesh.centroid())
    moved = apply_transform(transform, mesh.vertices)
    attrs = np.concatenate([mesh.colors, mesh.source_uv], axis=1)
    _, tri_id, attr = rasterize_attributes(
        moved, attrs, mesh.triangles,
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)
    covered = tri_id >= 0
    image = np.where(covered[..., None], attr[..., 0:3], 0.0).astype(np.float32)
    h, w = mesh.source_mask.shape
    su = np.clip(np.round(attr[..., 3]).astype(np.int64), 0, w - 1)
    sv = np.clip(np.round(attr[..., 4]).astype(np.int64), 0, h - 1)
    from_core = np.zeros_like(covered)
    if mesh.core_triangle.size:
        from_core[covered] = mesh.core_triangle[tri_id[covered]]
    visible = covered & mesh.source_mask[sv, su] & from_core
    return image, visible


def _stretch_field(src_uv: np.ndarray, visible: np.ndarray) -> StretchField:
    """Stretch ratio = 1 / smaller singular value of d(source uv)/d(target ij).

    The Jacobian is estimated with central differences on the correspondence
    layer, so the ratio is defined only where the needed neighbors are
    visible; elsewhere it is NaN.
    """
    if not visible.any():
        return StretchField(values=np.full(visible.shape, np.nan, dtype=np.float32))
    u = src_uv[..., 0]
    v = src_uv[..., 1]
    du_dj, du_di = np.gradient(u)
    dv_dj, dv_di = np.gradient(v)

    # Closed-form singular values of the 2x2 Jacobian [[a, b], [c, d]].
    a, b, c, d = du_di, du_dj, dv_di, dv_dj
    q = a * a + b * b + c * c + d * d
    det = a * d - b * c
    s1 = np.sqrt(np.maximum(q + 2.0 * np.abs(det), 0.0))
    s2 = np.sqrt(np.maximum(q - 2.0 * np.abs(det), 0.0))
    sigma_min = (s1 - s2) / 2.0

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 1.0 / sigma_min
    ratio[~np.isfinite(ratio)] = np.nan
    ratio[~visible] = np.nan
    return StretchField(values=ratio.astype(np.float32))


def stretch_mask(result: WarpResult, threshold: float) -> tuple[np.ndarray, WarpResult]:
    """Mask of over-stretched pixels, plus the result with those pixels demoted.

    Demoted pixels move from visible to ambiguous and lose their
    correspondence and depth entries.
    """
    if threshold <= 1.0:
        raise InvalidConfigError(f"stretch threshold must exceed 1, got {threshold}")
    values = result.stretch.values
    over = np.zeros_like(result.visible_mask)
    finite = np.isfinite(values)
    over[finite] = values[finite] > threshold
    over &= result.visible_mask
    if not over.any():
        return over, result

    visible = result.visible_mask & ~over
    ambiguous = result.ambiguous_mask | over
    correspondence = result.correspondence.copy()
    correspondence[over] = np.nan
    target_depth = result.target_depth.copy()
    target_depth[over] = np.nan
    masked = replace(result, visible_mask=visible, ambiguous_mask=ambiguous,
                     correspondence=correspondence, target_depth=target_depth)
    return over, masked


def export_correspondences(result: WarpResult, stride: int = 4) -> CorrespondenceSet:
    """Subsample source<->target pairs from the visible correspondence layer.

    Visible pixels are decimated in scanline order so the pair count never
    exceeds ceil(|visible| / stride^2). All pairs carry confidence 1.
    """
    if stride < 1:
        raise InvalidConfigError(f"stride must be >= 1, got {stride}")
    if not result.visible_mask.any():
        raise EmptySelectionError("warp produced no visible pixels to export")
    h, w = result.visible_mask.shape
    flat = np.flatnonzero(result.visible_mask.ravel())
    keep = flat[:: stride * stride]
    tv, tu = np.divmod(keep, w)
    src = result.correspondence[tv, tu]
    target = np.stack([tu.astype(np.float64), tv.astype(np.float64)], axis=1)
    conf = np.ones(keep.size)
    return CorrespondenceSet(source=src.astype(np.float64), target=target, confidence=conf)
