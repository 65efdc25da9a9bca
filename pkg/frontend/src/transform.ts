/**
 * Gizmo state: the user's in-progress 3D edit, serialized to the exact
 * transform JSON the session service validates.
 */

import {
  Quat,
  RigidTransform,
  Vec3,
  quatFromAxisAngle,
  quatIdentity,
  quatMultiply,
} from "./geometry.js";

export type PivotMode = "object-centroid" | "custom";
export type AxisConstraint = "x" | "y" | "z" | null;

export interface TransformJson {
  rotation: [number, number, number, number];
  translation: [number, number, number];
  pivot: [number, number, number] | "object-centroid";
  scale: number;
}

export class GizmoState {
  rotation: Quat = quatIdentity();
  translation: Vec3 = [0, 0, 0];
  pivotMode: PivotMode = "object-centroid";
  customPivot: Vec3 = [0, 0, 0];
  scale = 1.0;
  axisConstraint: AxisConstraint = null;
  /** True whenever the preview on screen no longer matches this state. */
  previewStale = false;

  reset(): void {
    this.rotation = quatIdentity();
    this.translation = [0, 0, 0];
    this.scale = 1.0;
    this.previewStale = true;
  }

  get isIdentity(): boolean {
    const [w, x, y, z] = this.rotation;
    return (
      Math.abs(w - 1) < 1e-12 &&
      Math.abs(x) + Math.abs(y) + Math.abs(z) < 1e-12 &&
      this.translation.every((t) => t === 0) &&
      this.scale === 1.0
    );
  }

  /** Apply an incremental rotation from a drag, honoring the axis constraint. */
  rotateBy(axis: Vec3, angleRad: number): void {
    const constrained = this.constrainAxis(axis);
    this.rotation = quatMultiply(quatFromAxisAngle(constrained, angleRad), this.rotation);
    this.previewStale = true;
  }

  translateBy(delta: Vec3): void {
    const d = this.axisConstraint ? this.maskToAxis(delta) : delta;
    this.translation = [
      this.translation[0] + d[0],
      this.translation[1] + d[1],
      this.translation[2] + d[2],
    ];
    this.previewStale = true;
  }

  scaleBy(factor: number): void {
    if (factor <= 0) throw new Error("scale factor must be positive");
    this.scale *= factor;
    this.previewStale = true;
  }

  private constrainAxis(axis: Vec3): Vec3 {
    switch (this.axisConstraint) {
      case "x":
        return [1, 0, 0];
      case "y":
        return [0, 1, 0];
      case "z":
        return [0, 0, 1];
      default:
        return axis;
    }
  }

  private maskToAxis(delta: Vec3): Vec3 {
    switch (this.axisConstraint) {
      case "x":
        return [delta[0], 0, 0];
      case "y":
        return [0, delta[1], 0];
      case "z":
        return [0, 0, delta[2]];
      default:
        return delta;
    }
  }

  toTransform(): RigidTransform {
    return {
      rotation: this.rotation,
      translation: this.translation,
      pivot: this.pivotMode === "object-centroid" ? "object-centroid" : this.customPivot,
      scale: this.scale,
    };
  }

  toTransformJson(): TransformJson {
    const t = this.toTransform();
    return {
      rotation: [...t.rotation] as TransformJson["rotation"],
      translation: [...t.translation] as TransformJson["translation"],
      pivot: t.pivot === "object-centroid" ? "object-centroid" : ([...t.pivot] as [number, number, number]),
      scale: t.scale,
    };
  }

  static fromTransformJson(json: TransformJson): GizmoState {
    const state = new GizmoState();
    validateTransformJson(json);
    state.rotation = [...json.rotation] as Quat;
    state.translation = [...json.translation] as Vec3;
    if (json.pivot === "object-centroid") {
      state.pivotMode = "object-centroid";
    } else {
      state.pivotMode = "custom";
      state.customPivot = [...json.pivot] as Vec3;
    }
    state.scale = json.scale;
    return state;
  }
}

/** Client-side mirror of the service's transform validation rules. */
export function validateTransformJson(json: TransformJson): void {
  if (!Array.isArray(json.rotation) || json.rotation.length !== 4) {
    throw new Error("rotation must be a (w,x,y,z) quaternion");
  }
  const norm = Math.hypot(...json.rotation);
  if (!(norm > 0) || !json.rotation.every(Number.isFinite)) {
    throw new Error("rotation must be a non-zero finite quaternion");
  }
  if (!Array.isArray(json.translation) || json.translation.length !== 3 ||
      !json.translation.every(Number.isFinite)) {
    throw new Error("translation must be a finite 3-vector");
  }
  if (json.pivot !== "object-centroid") {
    if (!Array.isArray(json.pivot) || json.pivot.length !== 3 ||
        !json.pivot.every(Number.isFinite)) {
      throw new Error('pivot must be a finite 3-vector or "object-centroid"');
    }
  }
  if (!(Number.isFinite(json.scale) && json.scale > 0)) {
    throw new Error("scale must be a positive number");
  }
}
