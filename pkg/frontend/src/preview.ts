/**
 * Preview loop: gizmo changes debounce into preview-warp calls; the latest
 * returned image is displayed verbatim. A transport failure raises an
 * offline banner but leaves the gizmo fully usable.
 */

import { HarnessClient } from "./api.js";
import { Debouncer, Scheduler } from "./debounce.js";
import { GizmoState } from "./transform.js";

export interface PreviewView {
  /** Display the PNG bytes returned by the service, unmodified. */
  showPreview(png: ArrayBuffer): void;
  setOfflineBanner(visible: boolean, message?: string): void;
}

export class PreviewLoop {
  private readonly debouncer: Debouncer;
  private generation = 0;
  requestsSent = 0;
  lastPng: ArrayBuffer | null = null;
  offline = false;

  constructor(
    private readonly client: HarnessClient,
    private readonly sessionId: string,
    private readonly gizmo: GizmoState,
    private readonly view: PreviewView,
    debounceMs = 150,
    scheduler?: Scheduler,
  ) {
    this.debouncer = scheduler
      ? new Debouncer(debounceMs, scheduler)
      : new Debouncer(debounceMs);
  }

  /** Call on every gizmo movement; at most one request fires per quiet window. */
  gizmoChanged(): void {
    this.gizmo.previewStale = true;
    this.debouncer.trigger(() => void this.refresh());
  }

  /** Fetch a preview for the current gizmo state immediately. */
  async refresh(): Promise<void> {
    const generation = ++this.generation;
    const transform = this.gizmo.toTransformJson();
    this.requestsSent += 1;
    try {
      const png = await this.client.previewWarp(this.sessionId, transform);
      if (generation !== this.generation) {
        return; // a newer request superseded this one
      }
      this.lastPng = png;
      this.offline = false;
      this.gizmo.previewStale = false;
      this.view.showPreview(png);
      this.view.setOfflineBanner(false);
    } catch (error) {
      if (generation !== this.generation) {
        return;
      }
      this.offline = true;
      this.view.setOfflineBanner(true, error instanceof Error ? error.message : String(error));
    }
  }

  dispose(): void {
    this.debouncer.cancel();
  }
}
