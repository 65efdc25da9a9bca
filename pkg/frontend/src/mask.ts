/**
 * Freehand brush mask editor. Painting is fully client-side so selection
 * works offline; a segmentation oracle button can seed the mask when the
 * service advertises that capability.
 */

export class MaskEditor {
  readonly mask: Uint8Array;
  brushRadius = 12;
  private strokes: Array<Uint8Array> = [];

  constructor(readonly width: number, readonly height: number) {
    this.mask = new Uint8Array(width * height);
  }

  get selectedCount(): number {
    let n = 0;
    for (const v of this.mask) n += v ? 1 : 0;
    return n;
  }

  beginStroke(): void {
    this.strokes.push(this.mask.slice());
    if (this.strokes.length > 32) {
      this.strokes.shift();
    }
  }

  undo(): boolean {
    const prev = this.strokes.pop();
    if (!prev) return false;
    this.mask.set(prev);
    return true;
  }

  paint(u: number, v: number, erase = false): void {
    const r = this.brushRadius;
    const r2 = r * r;
    const value = erase ? 0 : 1;
    const uMin = Math.max(0, Math.floor(u - r));
    const uMax = Math.min(this.width - 1, Math.ceil(u + r));
    const vMin = Math.max(0, Math.floor(v - r));
    const vMax = Math.min(this.height - 1, Math.ceil(v + r));
    for (let y = vMin; y <= vMax; y++) {
      for (let x = uMin; x <= uMax; x++) {
        const du = x - u;
        const dv = y - v;
        if (du * du + dv * dv <= r2) {
          this.mask[y * this.width + x] = value;
        }
      }
    }
  }

  /** Interpolate along a drag segment so fast strokes stay solid. */
  paintLine(u0: number, v0: number, u1: number, v1: number, erase = false): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(u1 - u0, v1 - v0) / (this.brushRadius / 2)));
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      this.paint(u0 + t * (u1 - u0), v0 + t * (v1 - v0), erase);
    }
  }

  loadFrom(other: Uint8Array): void {
    if (other.length !== this.mask.length) {
      throw new Error("mask size mismatch");
    }
    this.mask.set(other.map((v) => (v ? 1 : 0)));
  }

  /** RGBA bytes for canvas upload: selected pixels become opaque white. */
  toRgba(): Uint8ClampedArray<ArrayBuffer> {
    const rgba = new Uint8ClampedArray(new ArrayBuffer(this.width * this.height * 4));
    for (let i = 0; i < this.mask.length; i++) {
      const v = this.mask[i] ? 255 : 0;
      const o = 4 * i;
      rgba[o] = rgba[o + 1] = rgba[o + 2] = v;
      rgba[o + 3] = 255;
    }
    return rgba;
  }
}
