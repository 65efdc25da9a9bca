"""Configurable textured 3D scene rendered as ground truth for mock oracles.

The scene consists of background primitives plus one movable object whose
texture encodes its own source-view pixel coordinates in the red/green
channels (blue is the object id channel). Any rendering of the object can
therefore be decoded back to source positions, which the scene mock uses
to produce exact depth, novel views, background plates, and dense flow.

Background texture palettes must keep the blue channel below
``OBJECT_ID_THRESHOLD`` so object decoding stays unambiguous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from ..geometry import CameraIntrinsics, RigidTransform, apply_transform, project
from ..raster import rasterize_attributes

OBJECT_ID_THRESHOLD = 0.5
_BG_BLUE_CEILING = 0.45


def _texture_color(texture: dict, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-vertex color for normalized surface coordinates in [0, 1]."""
    kind = texture.get("kind", "ramp")
    if kind == "solid":
        base = np.asarray(texture.get("color", [0.5, 0.5, 0.3]), dtype=np.float64)
        rgb = np.tile(base, (u.size, 1))
    elif kind == "ramp":
        lo = np.asarray(texture.get("low", [0.15, 0.2, 0.1]), dtype=np.float64)
        hi = np.asarray(texture.get("high", [0.8, 0.7, 0.4]), dtype=np.float64)
        t = (0.5 * (u + v))[:, None]
        rgb = lo[None, :] * (1 - t) + hi[None, :] * t
    elif kind == "sine":
        scale = float(texture.get("scale", 6.0))
        base = np.asarray(texture.get("base", [0.45, 0.45, 0.25]), dtype=np.float64)
        amp = np.asarray(texture.get("amplitude", [0.25, 0.2, 0.1]), dtype=np.float64)
        phase = 2 * np.pi * scale
        wave = np.stack([np.sin(phase * u), np.sin(phase * v), np.sin(phase * (u + v))], axis=1)
        rgb = base[None, :] + amp[None, :] * wave
    elif kind == "checker":
        scale = float(texture.get("scale", 8.0))
        a = np.asarray(texture.get("colors", [[0.2, 0.2, 0.2], [0.75, 0.7, 0.4]])[0], dtype=np.float64)
        b = np.asarray(texture.get("colors", [[0.2, 0.2, 0.2], [0.75, 0.7, 0.4]])[1], dtype=np.float64)
        cell = (np.floor(u * scale) + np.floor(v * scale)) % 2
        rgb = np.where(cell[:, None] > 0.5, b[None, :], a[None, :])
    else:
        raise InvalidInputError(f"unknown texture kind {kind!r}")
    rgb = np.clip(rgb, 0.0, 1.0)
    rgb[:, 2] = np.minimum(rgb[:, 2], _BG_BLUE_CEILING)
    return rgb


def _grid_mesh(origin, basis_u, basis_v, extent_u, extent_v, subdiv):
    """Rectangle origin + s*bu + t*bv triangulated on a (subdiv+1)^2 grid."""
    origin = np.asarray(origin, dtype=np.float64)
    bu = np.asarray(basis_u, dtype=np.float64)
    bv = np.asarray(basis_v, dtype=np.float64)
    s = np.linspace(0.0, 1.0, subdiv + 1)
    t = np.linspace(0.0, 1.0, subdiv + 1)
    ss, tt = np.meshgrid(s, t)
    pts = (origin[None, :]
           + (ss.ravel() * extent_u)[:, None] * bu[None, :]
           + (tt.ravel() * extent_v)[:, None] * bv[None, :])
    n = subdiv + 1
    idx = np.arange(n * n).reshape(n, n)
    i00 = idx[:-1, :-1].ravel()
    i01 = idx[:-1, 1:].ravel()
    i10 = idx[1:, :-1].ravel()
    i11 = idx[1:, 1:].ravel()
    tris = np.concatenate([np.stack([i00, i01, i10], axis=1),
                           np.stack([i01, i11, i10], axis=1)], axis=0)
    return pts, ss.ravel(), tt.ravel(), tris


@dataclass
class SceneConfig:
    width: int
    height: int
    intrinsics: CameraIntrinsics
    background: list
    object_spec: dict
    edit_transform: RigidTransform
    depth_estimate: dict
    caption_text: str

    @staticmethod
    def from_json(obj: dict) -> "SceneConfig":
        width = int(obj["width"])
        height = int(obj["height"])
        if "intrinsics" in obj and obj["intrinsics"]:
            intr = CameraIntrinsics.from_json(obj["intrinsics"])
        else:
            intr = CameraIntrinsics.default(width, height)
        edit = RigidTransform.from_json(obj["edit_transform"]) if obj.get("edit_transform") \
            else RigidTransform.identity()
        return SceneConfig(
            width=width, height=height, intrinsics=intr,
            background=list(obj.get("background", [])),
            object_spec=dict(obj["object"]),
            edit_transform=edit,
            depth_estimate=dict(obj.get("depth_estimate", {"mode": "ground_truth"})),
            caption_text=str(obj.get("caption", "a textured scene")),
        )

    @staticmethod
    def load(path) -> "SceneConfig":
        return SceneConfig.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SceneRender:
    image: np.ndarray       # (H, W, 3) float32
    depth: np.ndarray       # (H, W) float64, NaN where nothing is hit
    object_mask: np.ndarray  # pixels owned by the object's triangles


class Scene:
    """Deterministic renderer for the configured scene."""

    def __init__(self, config: SceneConfig):
        self.config = config
        self.cam = config.intrinsics
        self._build()
        self._cache = {}

    def _build(self):
        verts, colors = [], []
        tris = []
        offset = 0
        for prim in self.config.background:
            if prim.get("type", "plane") != "plane":
                raise InvalidInputError(f"unsupported background primitive {prim.get('type')!r}")
            subdiv = int(prim.get("subdiv", 96))
            pts, su, tv, t = _grid_mesh(prim["origin"], prim["basis_u"], prim["basis_v"],
                                        float(prim["extent_u"]), float(prim["extent_v"]), subdiv)
            verts.append(pts)
            colors.append(_texture_color(prim.get("texture", {"kind": "ramp"}), su, tv))
            tris.append(t + offset)
            offset += pts.shape[0]
        self.bg_vertices = np.concatenate(verts, axis=0) if verts else np.zeros((0, 3))
        self.bg_colors = np.concatenate(colors, axis=0) if colors else np.zeros((0, 3))
        self.bg_triangles = np.concatenate(tris, axis=0) if tris else np.zeros((0, 3), dtype=np.int64)

        spec = self.config.object_spec
        if spec.get("type", "quad") != "quad":
            raise InvalidInputError(f"unsupported object type {spec.get('type')!r}")
        center = np.asarray(spec["center"], dtype=np.float64)
        bu = np.asarray(spec["basis_u"], dtype=np.float64)
        bv = np.asarray(spec["basis_v"], dtype=np.float64)
        half_u = float(spec["half_u"])
        half_v = float(spec["half_v"])
        subdiv = int(spec.get("subdiv", 64))
        origin = center - half_u * bu - half_v * bv
        pts, su, tv, tris_o = _grid_mesh(origin, bu, bv, 2 * half_u, 2 * half_v, subdiv)
        self.obj_vertices = pts
        self.obj_triangles = tris_o
        # Coordinate texture: each surface point's color encodes its own
        # source-view projection, with blue as the object id channel.
        uv = project(pts, self.cam)
        r = np.clip(uv[:, 0] / (self.cam.width - 1), 0.0, 1.0)
        g = np.clip(uv[:, 1] / (self.cam.height - 1), 0.0, 1.0)
        self.obj_colors = np.stack([r, g, np.ones_like(r)], axis=1)

    @property
    def edit_transform(self) -> RigidTransform:
        t = self.config.edit_transform
        if t.has_symbolic_pivot:
            t = t.resolve_pivot(self.obj_vertices.mean(axis=0))
        return t

    def _render(self, object_transform: RigidTransform | None,
                include_object: bool = True) -> SceneRender:
        cam = self.cam
        if include_object:
            obj = self.obj_vertices
            if object_transform is not None:
                obj = apply_transform(object_transform, obj)
            verts = np.concatenate([self.bg_vertices, obj], axis=0)
            colors = np.concatenate([self.bg_colors, self.obj_colors], axis=0)
            tris = np.concatenate([self.bg_triangles,
                                   self.obj_triangles + self.bg_vertices.shape[0]], axis=0)
            first_obj_tri = self.bg_triangles.shape[0]
        else:
            verts, colors, tris = self.bg_vertices, self.bg_colors, self.bg_triangles
            first_obj_tri = tris.shape[0] + 1
        zbuf, tri_id, attr = rasterize_attributes(
            verts, colors, tris, cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)
        covered = tri_id >= 0
        image = np.where(covered[..., None], attr, 0.0).astype(np.float32)
        depth = np.where(covered, zbuf, np.nan)
        object_mask = covered & (tri_id >= first_obj_tri)
        return SceneRender(image=image, depth=depth, object_mask=object_mask)

    def source(self) -> SceneRender:
        if "source" not in self._cache:
            self._cache["source"] = self._render(None)
        return self._cache["source"]

    def target(self) -> SceneRender:
        if "target" not in self._cache:
            self._cache["target"] = self._render(self.edit_transform)
        return self._cache["target"]

    def background(self) -> SceneRender:
        if "background" not in self._cache:
            self._cache["background"] = self._render(None, include_object=False)
        return self._cache["background"]

    def estimated_depth(self) -> np.ndarray:
        """Ground-truth depth, optionally perturbed inside the object mask.

        Perturbation models an imperfect monocular estimate: a smooth
        relative sinusoidal bump seeded from the config.
        """
        src = self.source()
        depth = src.depth.copy()
        # The source render should cover the frame; fall back to far depth.
        depth[~np.isfinite(depth)] = 50.0
        spec = self.config.depth_estimate
        if spec.get("mode", "ground_truth") == "perturbed":
            amplitude = float(spec.get("amplitude", 0.1))
            wavelength = float(spec.get("wavelength", 48.0))
            rng = np.random.default_rng(int(spec.get("seed", 0)))
            angle = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            yy, xx = np.mgrid[0:depth.shape[0], 0:depth.shape[1]].astype(np.float64)
            wave = np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / wavelength + phase)
            factor = 1.0 + amplitude * wave
            depth = np.where(src.object_mask, depth * factor, depth)
        return depth

    def decode_object_pixels(self, image: np.ndarray):
        """Recover source-view coordinates from coordinate-texture pixels.

        Returns (decodable mask, source u, source v); pixels whose blue
        id channel falls below the threshold are not decodable.
        """
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise InvalidInputError("expected an RGB image")
        decodable = img[..., 2] >= OBJECT_ID_THRESHOLD
        u = img[..., 0] * (self.cam.width - 1)
        v = img[..., 1] * (self.cam.height - 1)
        return decodable, u, v

    def gt_target_position(self, su: np.ndarray, sv: np.ndarray):
        """Where source-object pixels land in the target view, via GT geometry."""
        src = self.source()
        ui = np.clip(np.round(su).astype(np.int64), 0, self.cam.width - 1)
        vi = np.clip(np.round(sv).astype(np.int64), 0, self.cam.height - 1)
        depth = src.depth[vi, ui]
        ok = np.isfinite(depth) & src.object_mask[vi, ui]
        depth = np.where(ok, depth, 1.0)
        x = (su - self.cam.cx) * depth / self.cam.fx
        y = (sv - self.cam.cy) * depth / self.cam.fy
        pts = np.stack([x, y, depth], axis=-1)
        moved = apply_transform(self.edit_transform, pts.reshape(-1, 3)).reshape(pts.shape)
        z = moved[..., 2]
        ok &= z > 1e-9
        z_safe = np.where(ok, z, 1.0)
        gu = self.cam.fx * moved[..., 0] / z_safe + self.cam.cx
        gv = self.cam.fy * moved[..., 1] / z_safe + self.cam.cy
        return ok, gu, gv
