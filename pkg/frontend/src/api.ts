/** Typed client for the session service REST API. */

import { TransformJson } from "./transform.js";

export interface SessionSummary {
  id: string;
  status: string;
  iterations_done: number;
}

export interface SessionManifest {
  id: string;
  status: string;
  error: string | null;
  iterations_done: number;
  config: { sigma_schedule: number[]; iterations: number } & Record<string, unknown>;
  [key: string]: unknown;
}

export interface CreateSessionRequest {
  image: string; // base64 PNG
  mask: string; // base64 PNG
  transform: TransformJson;
  intrinsics?: Record<string, number> | null;
  config?: Record<string, unknown> | null;
  oracle?: string;
  session_id?: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class HarnessClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        detail = body.error ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(detail, response.status);
    }
    return response;
  }

  async listSessions(): Promise<SessionSummary[]> {
    const response = await this.request("/sessions");
    return (await response.json()).sessions;
  }

  async createSession(body: CreateSessionRequest): Promise<{ id: string; status: string }> {
    const response = await this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return response.json();
  }

  async getManifest(id: string): Promise<SessionManifest> {
    const response = await this.request(`/sessions/${id}`);
    return response.json();
  }

  async run(id: string): Promise<void> {
    await this.request(`/sessions/${id}/run`, { method: "POST" });
  }

  async deleteSession(id: string): Promise<void> {
    await this.request(`/sessions/${id}`, { method: "DELETE" });
  }

  artifactUrl(id: string, iteration: number, artifact: string): string {
    return `${this.baseUrl}/sessions/${id}/iter/${iteration}/${artifact}`;
  }

  async fetchArtifact(id: string, iteration: number, artifact: string): Promise<ArrayBuffer> {
    const response = await this.request(`/sessions/${id}/iter/${iteration}/${artifact}`);
    return response.arrayBuffer();
  }

  async fetchMetrics(id: string, iteration: number): Promise<Record<string, unknown>> {
    const response = await this.request(`/sessions/${id}/iter/${iteration}/metrics.json`);
    return response.json();
  }

  /** Geometry-only warp preview; resolves to PNG bytes. */
  async previewWarp(id: string, transform: TransformJson): Promise<ArrayBuffer> {
    const response = await this.request(`/sessions/${id}/preview-warp`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ transform }),
    });
    return response.arrayBuffer();
  }
}
