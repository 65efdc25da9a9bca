/**
 * Trace viewer model: per-iteration artifact columns plus the metric table,
 * reconstructed entirely from the REST API so a refresh loses nothing.
 */

import { ApiError, HarnessClient, SessionManifest } from "./api.js";

export const COLUMN_ARTIFACTS = ["warped.png", "synth.png", "undistorted.png"] as const;
export const DEPTH_ARTIFACTS = ["depth_pre.f32", "depth_post.f32"] as const;

export interface IterationColumn {
  index: number;
  sigma: number;
  images: Record<string, ArrayBuffer>;
  depths: Record<string, Float32Array>;
  metrics: Record<string, unknown>;
}

export interface TraceViewModel {
  sessionId: string;
  status: string;
  failureReason: string | null;
  columns: IterationColumn[];
}

export function parseDepthArtifact(buffer: ArrayBuffer): Float32Array {
  return new Float32Array(buffer);
}

/** Map a depth grid to RGB for display (near = warm, far = cool). */
export function depthToColormap(depth: Float32Array, width: number,
                                height: number): Uint8ClampedArray<ArrayBuffer> {
  let min = Infinity;
  let max = -Infinity;
  for (const d of depth) {
    if (Number.isFinite(d)) {
      if (d < min) min = d;
      if (d > max) max = d;
    }
  }
  const span = max > min ? max - min : 1;
  const rgba = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  for (let i = 0; i < depth.length; i++) {
    const o = 4 * i;
    if (!Number.isFinite(depth[i])) {
      rgba[o] = rgba[o + 1] = rgba[o + 2] = 0;
      rgba[o + 3] = 255;
      continue;
    }
    const t = (depth[i] - min) / span;
    rgba[o] = Math.round(255 * (1 - t));
    rgba[o + 1] = Math.round(96 + 64 * (1 - Math.abs(2 * t - 1)));
    rgba[o + 2] = Math.round(255 * t);
    rgba[o + 3] = 255;
  }
  return rgba;
}

export class TraceViewer {
  constructor(private readonly client: HarnessClient) {}

  /**
   * Load every completed iteration. Partial or failed sessions yield the
   * completed prefix plus the recorded failure reason.
   */
  async load(sessionId: string): Promise<TraceViewModel> {
    const manifest: SessionManifest = await this.client.getManifest(sessionId);
    const columns: IterationColumn[] = [];
    for (let k = 0; k < manifest.iterations_done; k++) {
      try {
        columns.push(await this.loadColumn(sessionId, k));
      } catch (error) {
        if (error instanceof ApiError && error.status === 404) {
          break; // iteration not fully persisted; show the completed prefix
        }
        throw error;
      }
    }
    return {
      sessionId,
      status: manifest.status,
      failureReason: manifest.status === "failed" ? manifest.error ?? "unknown failure" : null,
      columns,
    };
  }

  private async loadColumn(sessionId: string, index: number): Promise<IterationColumn> {
    const metrics = await this.client.fetchMetrics(sessionId, index);
    const images: Record<string, ArrayBuffer> = {};
    for (const name of COLUMN_ARTIFACTS) {
      images[name] = await this.client.fetchArtifact(sessionId, index, name);
    }
    const depths: Record<string, Float32Array> = {};
    for (const name of DEPTH_ARTIFACTS) {
      depths[name] = parseDepthArtifact(await this.client.fetchArtifact(sessionId, index, name));
    }
    return {
      index,
      sigma: Number(metrics["sigma"]),
      images,
      depths,
      metrics,
    };
  }
}

/** Rows for the per-iteration metric table, mirroring metrics.json exactly. */
export function metricTableRows(column: IterationColumn): Array<[string, string]> {
  const rows: Array<[string, string]> = [["sigma", String(column.metrics["sigma"])]];
  const metrics = column.metrics["metrics"] as Record<string, unknown> | undefined;
  if (metrics) {
    for (const key of Object.keys(metrics).sort()) {
      rows.push([key, String(metrics[key])]);
    }
  }
  rows.push(["correspondence_count", String(column.metrics["correspondence_count"])]);
  return rows;
}
