"""Heuristic depth completion for the background occluded by the selection.

Planar scenes have locally linear disparity, so the disparity-gradient map
is piecewise constant (planes flat, corners as edges). Completing the
gradient map by harmonic diffusion and integrating it back with a Poisson
solve therefore continues planes and creases through the hole instead of
smearing depth across it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .errors import DegenerateInputError, SolverFailureError
from .geometry import DepthMap, DisparityMap, depth_to_disparity, disparity_to_depth
from .poisson import guidance_rhs, solve_poisson

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@njit(cache=True)
def _median_sweep(values, unknown):
    """One in-place 3x3-median pass over unknown pixels; returns max change.

    The median of the window (center included, 9 samples where available)
    diffuses information from the Dirichlet ring while preserving step
    edges, so creases in piecewise-constant fields continue through the
    hole instead of blending.
    """
    h, w = values.shape
    window = np.empty(9, dtype=np.float64)
    worst = 0.0
    for i in range(h):
        for j in range(w):
            if not unknown[i, j]:
                continue
            n = 0
            for di in range(-1, 2):
                ii = i + di
                if ii < 0 or ii >= h:
                    continue
                for dj in range(-1, 2):
                    jj = j + dj
                    if jj < 0 or jj >= w:
                        continue
                    window[n] = values[ii, jj]
                    n += 1
            new = np.median(window[:n])
            change = abs(new - values[i, j])
            if change > worst:
                worst = change
            values[i, j] = new
    return worst


@dataclass(frozen=True)
class GradientField:
    """Disparity gradients (du, dv per pixel) with a validity mask."""

    gx: np.ndarray
    gy: np.ndarray
    valid_mask: np.ndarray
    fill_warning: str | None = None


def disparity_gradient(disparity: DisparityMap, hole: np.ndarray) -> GradientField:
    """Central-difference gradients outside the hole, one-sided at image borders.

    Valid pixels are those whose difference stencil never reads the hole;
    the mask is the hole's complement eroded by one pixel (cross-shaped).
    """
    hole = np.asarray(hole, dtype=bool)
    if hole.all():
        raise DegenerateInputError("hole covers the whole image")
    values = disparity.values.astype(np.float64).copy()
    values[hole] = np.nan
    gy, gx = np.gradient(values)
    valid = ~ndimage.binary_dilation(hole, structure=_CROSS)
    valid &= np.isfinite(gx) & np.isfinite(gy)
    return GradientField(gx=gx, gy=gy, valid_mask=valid)


def fill_gradient(field: GradientField, hole: np.ndarray,
                  max_sweeps: int = 4000, tolerance: float = 1e-6) -> GradientField:
    """Fill invalid gradient entries by iterated edge-preserving diffusion.

    Each channel starts from its nearest valid value and relaxes under 3x3
    median sweeps with the valid region as Dirichlet data. Valid pixels are
    untouched bit-exactly. Sweeps stop once the largest per-sweep change
    drops below ``tolerance``; hitting the sweep cap flags a warning on the
    result instead of failing.
    """
    hole = np.asarray(hole, dtype=bool)
    unknown = ~field.valid_mask
    if not unknown.any():
        return field
    warning = None
    _, (ir, ic) = ndimage.distance_transform_edt(unknown, return_indices=True)
    filled = []
    for channel in (field.gx, field.gy):
        values = np.where(field.valid_mask, channel, 0.0)
        values[unknown] = values[ir, ic][unknown]
        converged = False
        for _ in range(max_sweeps):
            if _median_sweep(values, unknown) < tolerance:
                converged = True
                break
        if not converged:
            warning = f"gradient fill hit the sweep cap ({max_sweeps})"
        out = channel.copy()
        out[unknown] = values[unknown]
        filled.append(out)
    return GradientField(gx=filled[0], gy=filled[1],
                         valid_mask=np.ones_like(field.valid_mask), fill_warning=warning)


def poisson_reconstruct(field: GradientField, anchor: DisparityMap, hole: np.ndarray,
                        tolerance: float = 1e-5, max_cycles: int = 400) -> DisparityMap:
    """Integrate the gradient field over the hole, anchored on the hole boundary.

    Solves the discrete Poisson equation (divergence of the guidance field)
    with anchor disparities as Dirichlet data outside the hole; fails with
    the final residual if the solver cannot reach ``tolerance``.
    """
    hole = np.asarray(hole, dtype=bool)
    if hole.all():
        raise DegenerateInputError("hole covers the whole image; nothing anchors the solve")
    if not hole.any():
        return anchor
    rhs = guidance_rhs(field.gx, field.gy)
    boundary = np.where(hole, 0.0, anchor.values.astype(np.float64))
    # Seed the hole with nearest anchored disparity to shorten convergence.
    _, (ir, ic) = ndimage.distance_transform_edt(hole, return_indices=True)
    seed = boundary[ir, ic]
    result = solve_poisson(rhs, boundary, hole, tolerance=tolerance,
                           max_cycles=max_cycles, initial=seed)
    if not result.converged:
        raise SolverFailureError(
            f"poisson reconstruction stalled at residual {result.residual:.3e} "
            f"after {result.cycles} cycles", residual=result.residual)
    values = anchor.values.astype(np.float64).copy()
    values[hole] = result.values[hole]
    return DisparityMap(values=values, intrinsics=anchor.intrinsics)


def inpaint_background_depth(depth: DepthMap, object_mask: np.ndarray) -> DepthMap:
    """Complete depth behind the selected object.

    Pipeline: depth -> disparity -> disparity gradient -> harmonic gradient
    fill -> Poisson integration -> depth. Pixels outside the mask are
    returned bit-identically.
    """
    object_mask = np.asarray(object_mask, dtype=bool)
    if not object_mask.any():
        return depth
    if object_mask.all():
        raise DegenerateInputError("object mask covers the whole image")

    # Invalid depth inside the hole is irrelevant; invalid outside joins the hole.
    hole = object_mask | ~depth.valid_mask
    if hole.all():
        raise DegenerateInputError("no valid depth outside the object mask")
    disparity = depth_to_disparity(depth)
    grad = disparity_gradient(disparity, hole)
    filled = fill_gradient(grad, hole)
    completed = poisson_reconstruct(filled, disparity, hole)
    out = disparity_to_depth(completed)

    values = out.values.copy()
    keep = ~object_mask & depth.valid_mask
    values[keep] = depth.values[keep]
    return depth.with_values(values)
