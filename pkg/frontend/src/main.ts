/**
 * Studio application: load an image, paint a selection, drag the gizmo with
 * live warp previews, launch runs, and browse per-iteration traces.
 */

import { HarnessClient } from "./api.js";
import { boundingBoxes, maskBounds } from "./bbox.js";
import { defaultIntrinsics } from "./geometry.js";
import { MaskEditor } from "./mask.js";
import { PreviewLoop, PreviewView } from "./preview.js";
import { COLUMN_ARTIFACTS, TraceViewer, depthToColormap, metricTableRows } from "./traces.js";
import { GizmoState } from "./transform.js";

const SERVICE_URL = (window as unknown as { DEPTHEDIT_SERVICE?: string }).DEPTHEDIT_SERVICE
  ?? "http://127.0.0.1:8700";

const client = new HarnessClient(SERVICE_URL);
const gizmo = new GizmoState();

let image: HTMLImageElement | null = null;
let maskEditor: MaskEditor | null = null;
let sessionId: string | null = null;
let previewLoop: PreviewLoop | null = null;
let pollTimer: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const editCanvas = el<HTMLCanvasElement>("edit-canvas");
const previewCanvas = el<HTMLCanvasElement>("preview-canvas");
const banner = el<HTMLDivElement>("offline-banner");
const statusLine = el<HTMLDivElement>("status-line");
const tracesRoot = el<HTMLDivElement>("traces");

const previewView: PreviewView = {
  showPreview(png: ArrayBuffer): void {
    const blob = new Blob([png], { type: "image/png" });
    const url = URL.createObjectURL(blob);
    const img = new Image();
    img.onload = () => {
      const ctx = previewCanvas.getContext("2d")!;
      previewCanvas.width = img.width;
      previewCanvas.height = img.height;
      ctx.drawImage(img, 0, 0);
      drawBoxOverlay(ctx);
      URL.revokeObjectURL(url);
    };
    img.src = url;
  },
  setOfflineBanner(visible: boolean, message?: string): void {
    banner.style.display = visible ? "block" : "none";
    banner.textContent = visible ? `service unreachable: ${message ?? ""}` : "";
  },
};

function drawBoxOverlay(ctx: CanvasRenderingContext2D): void {
  if (!maskEditor || !image) return;
  const bounds = maskBounds(maskEditor.mask, maskEditor.width, maskEditor.height);
  if (!bounds) return;
  const k = defaultIntrinsics(image.width, image.height);
  const overlay = boundingBoxes(bounds, k, gizmo.toTransform());
  ctx.lineWidth = 1;
  ctx.strokeStyle = "rgba(60, 120, 255, 0.9)";
  for (const seg of overlay.source) {
    ctx.beginPath();
    ctx.moveTo(seg.from[0], seg.from[1]);
    ctx.lineTo(seg.to[0], seg.to[1]);
    ctx.stroke();
  }
  ctx.lineWidth = 2.5;
  ctx.strokeStyle = "rgba(255, 70, 60, 0.9)";
  for (const seg of overlay.target) {
    ctx.beginPath();
    ctx.moveTo(seg.from[0], seg.from[1]);
    ctx.lineTo(seg.to[0], seg.to[1]);
    ctx.stroke();
  }
}

function redrawEditCanvas(): void {
  if (!image || !maskEditor) return;
  const ctx = editCanvas.getContext("2d")!;
  editCanvas.width = image.width;
  editCanvas.height = image.height;
  ctx.drawImage(image, 0, 0);
  const overlay = new ImageData(maskEditor.toRgba(), maskEditor.width, maskEditor.height);
  // Tint selected pixels.
  const tint = document.createElement("canvas");
  tint.width = maskEditor.width;
  tint.height = maskEditor.height;
  tint.getContext("2d")!.putImageData(overlay, 0, 0);
  ctx.globalAlpha = 0.35;
  ctx.drawImage(tint, 0, 0);
  ctx.globalAlpha = 1.0;
}

el<HTMLInputElement>("image-input").addEventListener("change", (event) => {
  const file = (event.target as HTMLInputElement).files?.[0];
  if (!file) return;
  const img = new Image();
  img.onload = () => {
    image = img;
    maskEditor = new MaskEditor(img.width, img.height);
    redrawEditCanvas();
  };
  img.src = URL.createObjectURL(file);
});

let painting = false;
let lastPoint: [number, number] | null = null;
editCanvas.addEventListener("pointerdown", (e) => {
  if (!maskEditor) return;
  painting = true;
  maskEditor.beginStroke();
  lastPoint = [e.offsetX, e.offsetY];
  maskEditor.paint(e.offsetX, e.offsetY, e.shiftKey);
  redrawEditCanvas();
});
editCanvas.addEventListener("pointermove", (e) => {
  if (!painting || !maskEditor || !lastPoint) return;
  maskEditor.paintLine(lastPoint[0], lastPoint[1], e.offsetX, e.offsetY, e.shiftKey);
  lastPoint = [e.offsetX, e.offsetY];
  redrawEditCanvas();
});
window.addEventListener("pointerup", () => {
  painting = false;
  lastPoint = null;
});

function canvasPngBase64(draw: (ctx: CanvasRenderingContext2D) => void,
                         width: number, height: number): string {
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  draw(canvas.getContext("2d")!);
  return canvas.toDataURL("image/png").split(",")[1];
}

el<HTMLButtonElement>("create-session").addEventListener("click", async () => {
  if (!image || !maskEditor || maskEditor.selectedCount === 0) {
    statusLine.textContent = "load an image and paint a selection first";
    return;
  }
  const img = image;
  const mask = maskEditor;
  const imageB64 = canvasPngBase64((ctx) => ctx.drawImage(img, 0, 0), img.width, img.height);
  const maskB64 = canvasPngBase64((ctx) => {
    ctx.putImageData(new ImageData(mask.toRgba(), mask.width, mask.height), 0, 0);
  }, mask.width, mask.height);
  const created = await client.createSession({
    image: imageB64,
    mask: maskB64,
    transform: gizmo.toTransformJson(),
    oracle: el<HTMLInputElement>("oracle-input").value || undefined,
  });
  sessionId = created.id;
  statusLine.textContent = `session ${created.id}: ${created.status}`;
  previewLoop?.dispose();
  previewLoop = new PreviewLoop(client, created.id, gizmo, previewView);
  previewLoop.gizmoChanged();
});

function bindSlider(id: string, apply: (value: number) => void): void {
  const slider = el<HTMLInputElement>(id);
  slider.addEventListener("input", () => {
    apply(parseFloat(slider.value));
    previewLoop?.gizmoChanged();
  });
}

let lastAngles = { x: 0, y: 0, z: 0 };
(["x", "y", "z"] as const).forEach((axis) => {
  bindSlider(`rot-${axis}`, (deg) => {
    const delta = ((deg - lastAngles[axis]) * Math.PI) / 180;
    lastAngles[axis] = deg;
    const vec: [number, number, number] =
      axis === "x" ? [1, 0, 0] : axis === "y" ? [0, 1, 0] : [0, 0, 1];
    gizmo.rotateBy(vec, delta);
  });
});

let lastShift = { x: 0, y: 0, z: 0 };
(["x", "y", "z"] as const).forEach((axis) => {
  bindSlider(`tr-${axis}`, (value) => {
    const delta = value - lastShift[axis];
    lastShift[axis] = value;
    gizmo.translateBy(axis === "x" ? [delta, 0, 0] : axis === "y" ? [0, delta, 0] : [0, 0, delta]);
  });
});

bindSlider("scale", (value) => {
  if (value > 0 && gizmo.scale > 0) {
    gizmo.scaleBy(value / gizmo.scale);
  }
});

el<HTMLButtonElement>("run").addEventListener("click", async () => {
  if (!sessionId) return;
  await client.run(sessionId);
  statusLine.textContent = `session ${sessionId}: running`;
  if (pollTimer !== null) window.clearInterval(pollTimer);
  pollTimer = window.setInterval(async () => {
    if (!sessionId) return;
    const manifest = await client.getManifest(sessionId);
    statusLine.textContent = `session ${sessionId}: ${manifest.status}`;
    if (manifest.status === "done" || manifest.status === "failed") {
      if (pollTimer !== null) window.clearInterval(pollTimer);
      pollTimer = null;
      await renderTraces(sessionId);
    }
  }, 1000);
});

async function renderTraces(id: string): Promise<void> {
  const viewer = new TraceViewer(client);
  const model = await viewer.load(id);
  tracesRoot.innerHTML = "";
  if (model.failureReason) {
    const failure = document.createElement("div");
    failure.className = "failure";
    failure.textContent = `failed: ${model.failureReason}`;
    tracesRoot.appendChild(failure);
  }
  for (const column of model.columns) {
    const box = document.createElement("div");
    box.className = "trace-column";
    const title = document.createElement("h3");
    title.textContent = `iteration ${column.index} (sigma ${column.sigma})`;
    box.appendChild(title);
    for (const name of COLUMN_ARTIFACTS) {
      const img = document.createElement("img");
      const blob = new Blob([column.images[name]], { type: "image/png" });
      img.src = URL.createObjectURL(blob);
      img.title = name;
      box.appendChild(img);
    }
    for (const [name, depth] of Object.entries(column.depths)) {
      const canvas = document.createElement("canvas");
      const side = Math.round(Math.sqrt(depth.length));
      canvas.width = side;
      canvas.height = side;
      canvas.title = name;
      const rgba = depthToColormap(depth, side, side);
      canvas.getContext("2d")!.putImageData(new ImageData(rgba, side, side), 0, 0);
      box.appendChild(canvas);
    }
    const table = document.createElement("table");
    for (const [key, value] of metricTableRows(column)) {
      const row = table.insertRow();
      row.insertCell().textContent = key;
      row.insertCell().textContent = value;
    }
    box.appendChild(table);
    tracesRoot.appendChild(box);
  }
}
