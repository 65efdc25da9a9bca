/**
 * Source and target 3D bounding-box overlays for the gizmo view: the source
 * box drawn thin in blue, the transformed target box thick in red.
 *
 * Before a run no depth is available client-side, so the box wraps the mask
 * bounds lifted to an assumed plane depth (matching the service's preview
 * fallback), with a nominal thickness.
 */

import { Intrinsics, RigidTransform, Vec3, applyTransform, project, unproject } from "./geometry.js";

export interface MaskBounds {
  minU: number;
  minV: number;
  maxU: number;
  maxV: number;
}

export interface Segment2D {
  from: [number, number];
  to: [number, number];
}

export interface BoxOverlay {
  source: Segment2D[];
  target: Segment2D[];
  centroid: Vec3;
}

const EDGES: Array<[number, number]> = [
  [0, 1], [1, 3], [3, 2], [2, 0], // front face
  [4, 5], [5, 7], [7, 6], [6, 4], // back face
  [0, 4], [1, 5], [2, 6], [3, 7], // connectors
];

export function boxCorners(bounds: MaskBounds, k: Intrinsics, depth: number,
                           thicknessFraction = 0.2): Vec3[] {
  const front = depth;
  const a = unproject(bounds.minU, bounds.minV, front, k);
  const b = unproject(bounds.maxU, bounds.maxV, front, k);
  const thickness = thicknessFraction * Math.max(b[0] - a[0], b[1] - a[1]);
  const back = front + thickness;
  const corners: Vec3[] = [];
  for (const z of [front, back]) {
    for (const v of [bounds.minV, bounds.maxV]) {
      for (const u of [bounds.minU, bounds.maxU]) {
        corners.push(unproject(u, v, 1, k).map((c) => c * z) as Vec3);
      }
    }
  }
  return corners;
}

function centroidOf(corners: Vec3[]): Vec3 {
  const sum = corners.reduce<Vec3>((acc, c) => [acc[0] + c[0], acc[1] + c[1], acc[2] + c[2]],
                                   [0, 0, 0]);
  return [sum[0] / corners.length, sum[1] / corners.length, sum[2] / corners.length];
}

function projectEdges(corners: Vec3[], k: Intrinsics): Segment2D[] {
  const pts = corners.map((c) => project(c, k));
  return EDGES.map(([i, j]) => ({ from: pts[i], to: pts[j] }));
}

/** Overlay segments for the current gizmo transform. */
export function boundingBoxes(bounds: MaskBounds, k: Intrinsics, transform: RigidTransform,
                              depth = 2.0): BoxOverlay {
  const corners = boxCorners(bounds, k, depth);
  const centroid = centroidOf(corners);
  const moved = corners.map((c) => applyTransform(transform, c, centroid));
  return {
    source: projectEdges(corners, k),
    target: projectEdges(moved, k),
    centroid,
  };
}

/** Pixel bounds of the painted selection; null when nothing is selected. */
export function maskBounds(mask: Uint8Array, width: number, height: number): MaskBounds | null {
  let minU = width;
  let minV = height;
  let maxU = -1;
  let maxV = -1;
  for (let v = 0; v < height; v++) {
    for (let u = 0; u < width; u++) {
      if (mask[v * width + u]) {
        if (u < minU) minU = u;
        if (u > maxU) maxU = u;
        if (v < minV) minV = v;
        if (v > maxV) maxV = v;
      }
    }
  }
  return maxU < 0 ? null : { minU, minV, maxU, maxV };
}
