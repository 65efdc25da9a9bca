import { describe, expect, it } from "vitest";

import { FetchLike, HarnessClient } from "../src/api.js";
import { TraceViewer, depthToColormap, metricTableRows } from "../src/traces.js";

const METRICS = {
  sigma: 0.5,
  correspondence_count: 275,
  solver: { iterations: 4 },
  metrics: {
    perceptual_similarity: 0.97,
    lpips_proxy: 0.012,
    lpips_source: "warp-back-rmse",
    mean_confidence: 0.64,
    confident_area: 0.81,
    region_pixels: 5000,
  },
};

function mockService(iterationsDone: number, status = "done", error: string | null = null,
                     missingFrom = Infinity): HarnessClient {
  const fetchImpl: FetchLike = async (url) => {
    if (url.endsWith("/sessions/sess")) {
      return Response.json({ id: "sess", status, error, iterations_done: iterationsDone,
                             config: { sigma_schedule: [0.5, 0.4, 0.3], iterations: 3 } });
    }
    const artifact = url.match(/\/iter\/(\d+)\/(.+)$/);
    if (artifact) {
      const k = parseInt(artifact[1], 10);
      if (k >= missingFrom) {
        return Response.json({ error: "missing" }, { status: 404 });
      }
      const name = artifact[2];
      if (name === "metrics.json") {
        return Response.json({ ...METRICS, sigma: [0.5, 0.4, 0.3][k] });
      }
      if (name.endsWith(".png")) {
        return new Response(new Uint8Array([0x89, 0x50, k]).buffer, { status: 200 });
      }
      if (name.endsWith(".f32")) {
        const depth = new Float32Array([1, 2, 3, 4]);
        return new Response(depth.buffer, { status: 200 });
      }
    }
    return Response.json({ error: `unexpected ${url}` }, { status: 500 });
  };
  return new HarnessClient("http://svc", fetchImpl);
}

describe("TraceViewer", () => {
  it("renders one column per completed iteration of a finished session", async () => {
    const viewer = new TraceViewer(mockService(3));
    const model = await viewer.load("sess");
    expect(model.status).toBe("done");
    expect(model.failureReason).toBeNull();
    expect(model.columns.length).toBe(3);
    expect(model.columns.map((c) => c.sigma)).toEqual([0.5, 0.4, 0.3]);
    for (const column of model.columns) {
      expect(Object.keys(column.images)).toEqual(["warped.png", "synth.png", "undistorted.png"]);
      expect(column.depths["depth_pre.f32"]).toBeInstanceOf(Float32Array);
    }
  });

  it("shows the completed prefix plus the reason for a failed session", async () => {
    const viewer = new TraceViewer(mockService(2, "failed", "OracleError: boom"));
    const model = await viewer.load("sess");
    expect(model.failureReason).toContain("boom");
    expect(model.columns.length).toBe(2);
  });

  it("stops at partially persisted iterations", async () => {
    const viewer = new TraceViewer(mockService(3, "done", null, 1));
    const model = await viewer.load("sess");
    expect(model.columns.length).toBe(1);
  });

  it("metric table mirrors metrics.json values exactly", async () => {
    const viewer = new TraceViewer(mockService(1));
    const model = await viewer.load("sess");
    const rows = metricTableRows(model.columns[0]);
    const asMap = Object.fromEntries(rows);
    expect(asMap["sigma"]).toBe("0.5");
    expect(asMap["perceptual_similarity"]).toBe("0.97");
    expect(asMap["lpips_proxy"]).toBe("0.012");
    expect(asMap["mean_confidence"]).toBe("0.64");
    expect(asMap["confident_area"]).toBe("0.81");
    expect(asMap["correspondence_count"]).toBe("275");
  });
});

describe("depthToColormap", () => {
  it("maps near to warm and far to cool with full alpha", () => {
    const rgba = depthToColormap(new Float32Array([1, 2]), 2, 1);
    expect(rgba[0]).toBe(255); // near: red channel max
    expect(rgba[4 + 2]).toBe(255); // far: blue channel max
    expect(rgba[3]).toBe(255);
    expect(rgba[7]).toBe(255);
  });

  it("handles non-finite entries", () => {
    const rgba = depthToColormap(new Float32Array([NaN, 1]), 2, 1);
    expect(rgba[0]).toBe(0);
    expect(rgba[3]).toBe(255);
  });
});
