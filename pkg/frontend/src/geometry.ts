/**
 * Pinhole camera and rigid-transform math mirroring the engine's conventions:
 * right-handed camera frame with +z into the scene, image origin top-left,
 * pixel centers at integer coordinates.
 */

export type Vec3 = [number, number, number];
/** Unit quaternion in (w, x, y, z) order. */
export type Quat = [number, number, number, number];

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export function defaultIntrinsics(width: number, height: number, vfovDeg = 55): Intrinsics {
  const f = height / 2 / Math.tan(((vfovDeg / 2) * Math.PI) / 180);
  return { fx: f, fy: f, cx: (width - 1) / 2, cy: (height - 1) / 2, width, height };
}

export function quatIdentity(): Quat {
  return [1, 0, 0, 0];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n === 0) throw new Error("zero quaternion");
  const s = q[0] < 0 ? -1 / n : 1 / n;
  return [q[0] * s, q[1] * s, q[2] * s, q[3] * s];
}

export function quatFromAxisAngle(axis: Vec3, angleRad: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n === 0) throw new Error("zero rotation axis");
  const h = angleRad / 2;
  const s = Math.sin(h) / n;
  return quatNormalize([Math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s]);
}

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return quatNormalize([
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ]);
}

export function rotate(q: Quat, p: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // p' = p + 2 w (v x p) + 2 (v x (v x p)) with v = (x, y, z)
  const cx1 = y * p[2] - z * p[1];
  const cy1 = z * p[0] - x * p[2];
  const cz1 = x * p[1] - y * p[0];
  const cx2 = y * cz1 - z * cy1;
  const cy2 = z * cx1 - x * cz1;
  const cz2 = x * cy1 - y * cx1;
  return [p[0] + 2 * (w * cx1 + cx2), p[1] + 2 * (w * cy1 + cy2), p[2] + 2 * (w * cz1 + cz2)];
}

export interface RigidTransform {
  rotation: Quat;
  translation: Vec3;
  /** Concrete pivot point or the engine's symbolic object-centroid sentinel. */
  pivot: Vec3 | "object-centroid";
  scale: number;
}

export function applyTransform(t: RigidTransform, p: Vec3, centroid?: Vec3): Vec3 {
  const pivot = t.pivot === "object-centroid" ? centroid : t.pivot;
  if (!pivot) throw new Error("object-centroid pivot needs a resolved centroid");
  const scaled: Vec3 = [
    t.scale * (p[0] - pivot[0]),
    t.scale * (p[1] - pivot[1]),
    t.scale * (p[2] - pivot[2]),
  ];
  const r = rotate(t.rotation, scaled);
  return [
    r[0] + pivot[0] + t.translation[0],
    r[1] + pivot[1] + t.translation[1],
    r[2] + pivot[2] + t.translation[2],
  ];
}

export function project(p: Vec3, k: Intrinsics): [number, number] {
  if (p[2] <= 0) throw new Error("point behind camera");
  return [(k.fx * p[0]) / p[2] + k.cx, (k.fy * p[1]) / p[2] + k.cy];
}

export function unproject(u: number, v: number, depth: number, k: Intrinsics): Vec3 {
  return [((u - k.cx) * depth) / k.fx, ((v - k.cy) * depth) / k.fy, depth];
}
