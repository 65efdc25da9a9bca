"""Deterministic software rasterizer with perspective-correct attribute interpolation.

Vertex projection is vectorized in numpy; fragment work runs in a numba
kernel parallelized over horizontal row bands. Every pixel row is owned by
exactly one band, and each band visits its triangles in ascending index
order, so the output is bit-identical to a serial scan: contested pixels go
to the nearer fragment, and depth ties within Z_TIE_EPS keep the incumbent
lower triangle index.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit, prange

# The parallel layer probes TBB first and warns when only OpenMP/workqueue
# are usable; any available layer is fine for the banded kernel.
warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

Z_TIE_EPS = 1.0e-7
Z_NEAR = 1.0e-6
_BANDS = 16


@njit(cache=True, parallel=True)
def _raster_bands(u, v, inv_z, attrs, tris, tri_ids, offsets, band_rows,
                  width, height, ztie, zbuf, tri_buf, attr_buf):
    n_attr = attrs.shape[1]
    n_bands = offsets.shape[0] - 1
    for band in prange(n_bands):
        row_lo = band_rows[band]
        row_hi = band_rows[band + 1] - 1  # inclusive
        for k in range(offsets[band], offsets[band + 1]):
            t = tri_ids[k]
            i0 = tris[t, 0]
            i1 = tris[t, 1]
            i2 = tris[t, 2]
            u0 = u[i0]
            v0 = v[i0]
            u1 = u[i1]
            v1 = v[i1]
            u2 = u[i2]
            v2 = v[i2]
            area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
            if area == 0.0:
                continue
            xmin = int(np.floor(min(u0, min(u1, u2))))
            xmax = int(np.ceil(max(u0, max(u1, u2))))
            ymin = int(np.floor(min(v0, min(v1, v2))))
            ymax = int(np.ceil(max(v0, max(v1, v2))))
            if xmin < 0:
                xmin = 0
            if xmax > width - 1:
                xmax = width - 1
            if ymin < row_lo:
                ymin = row_lo
            if ymax > row_hi:
                ymax = row_hi
            if xmin > xmax or ymin > ymax:
                continue
            inv0 = inv_z[i0]
            inv1 = inv_z[i1]
            inv2 = inv_z[i2]
            for py in range(ymin, ymax + 1):
                fy = float(py)
                for px in range(xmin, xmax + 1):
                    fx = float(px)
                    w0 = (u2 - u1) * (fy - v1) - (v2 - v1) * (fx - u1)
                    w1 = (u0 - u2) * (fy - v2) - (v0 - v2) * (fx - u2)
                    w2 = (u1 - u0) * (fy - v0) - (v1 - v0) * (fx - u0)
                    if area > 0.0:
                        if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                            continue
                    else:
                        if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                            continue
                    b0 = w0 / area
                    b1 = w1 / area
                    b2 = w2 / area
                    pix_inv_z = b0 * inv0 + b1 * inv1 + b2 * inv2
                    if pix_inv_z <= 0.0:
                        continue
                    z = 1.0 / pix_inv_z
                    # Ascending order per pixel: replacing only on a clear win
                    # keeps the lowest index among fragments tied within ztie.
                    if z < zbuf[py, px] - ztie:
                        zbuf[py, px] = z
                        tri_buf[py, px] = t
                        for a in range(n_attr):
                            attr_buf[py, px, a] = (b0 * attrs[i0, a] * inv0 +
                                                   b1 * attrs[i1, a] * inv1 +
                                                   b2 * attrs[i2, a] * inv2) * z


def rasterize_attributes(xyz: np.ndarray, attrs: np.ndarray, tris: np.ndarray,
                         fx: float, fy: float, cx: float, cy: float,
                         width: int, height: int):
    """Rasterize triangles; returns (zbuf, tri_id, attr_buf).

    Uncovered pixels carry zbuf=inf and tri_id=-1. Triangles touching the
    near plane (any vertex z <= Z_NEAR) are dropped whole.
    """
    width = int(width)
    height = int(height)
    zbuf = np.full((height, width), np.inf)
    tri_buf = np.full((height, width), -1, dtype=np.int64)
    attr_buf = np.zeros((height, width, attrs.shape[1]))
    if tris.shape[0] == 0:
        return zbuf, tri_buf, attr_buf

    xyz = np.ascontiguousarray(xyz, dtype=np.float64)
    attrs = np.ascontiguousarray(attrs, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)

    z = xyz[:, 2]
    safe = np.where(z > Z_NEAR, z, 1.0)
    u = fx * xyz[:, 0] / safe + cx
    v = fy * xyz[:, 1] / safe + cy
    inv_z = 1.0 / safe

    tz = z[tris]
    keep = (tz > Z_NEAR).all(axis=1)
    tu = u[tris]
    tv = v[tris]
    ymin = np.floor(tv.min(axis=1)).astype(np.int64)
    ymax = np.ceil(tv.max(axis=1)).astype(np.int64)
    xmin = np.floor(tu.min(axis=1))
    xmax = np.ceil(tu.max(axis=1))
    keep &= (ymax >= 0) & (ymin <= height - 1) & (xmax >= 0) & (xmin <= width - 1)

    # Row bands owned by one worker each; a triangle visits every band its
    # bounding box touches, preserving ascending index order inside a band.
    n_bands = min(_BANDS, height)
    band_rows = np.linspace(0, height, n_bands + 1).astype(np.int64)
    tri_ids: list[np.ndarray] = []
    offsets = np.zeros(n_bands + 1, dtype=np.int64)
    all_ids = np.flatnonzero(keep)
    for band in range(n_bands):
        lo, hi = band_rows[band], band_rows[band + 1] - 1
        hit = all_ids[(ymin[all_ids] <= hi) & (ymax[all_ids] >= lo)]
        tri_ids.append(hit)
        offsets[band + 1] = offsets[band] + hit.size
    tri_ids_flat = np.concatenate(tri_ids) if tri_ids else np.zeros(0, dtype=np.int64)

    _raster_bands(u, v, inv_z, attrs, tris, tri_ids_flat, offsets, band_rows,
                  width, height, Z_TIE_EPS, zbuf, tri_buf, attr_buf)
    return zbuf, tri_buf, attr_buf
