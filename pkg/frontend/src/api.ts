/** Thin client for the fitting service HTTP API. */

import { LandmarkDocument, ResultDocument, SessionStatus } from "./types.js";

export interface FitOverrides {
  lambda?: number;
  iterations?: number;
  epsilon?: number;
  tie_weights?: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message = (payload as { error?: string }).error ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return payload as T;
  }

  async createSession(imageBase64: string, landmarks: LandmarkDocument): Promise<SessionStatus> {
    return this.request("POST", "/sessions", { image_base64: imageBase64, landmarks });
  }

  async getSession(id: string): Promise<SessionStatus> {
    return this.request("GET", `/sessions/${id}`);
  }

  async updateLandmarks(id: string, landmarks: LandmarkDocument): Promise<{ version: number }> {
    return this.request("PUT", `/sessions/${id}/landmarks`, landmarks);
  }

  async startFit(id: string, overrides: FitOverrides = {}): Promise<{ status: string }> {
    return this.request("POST", `/sessions/${id}/fit`, overrides);
  }

  async getResult(id: string): Promise<ResultDocument> {
    return this.request("GET", `/sessions/${id}/result`);
  }

  /** Poll until the running fit finishes; resolves with the final status. */
  async waitForFit(id: string, pollMs = 250, timeoutMs = 120000): Promise<SessionStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.getSession(id);
      if (status.status === "done" || status.status === "failed") {
        return status;
      }
      if (Date.now() > deadline) {
        throw new ApiError(408, "fit did not finish before the timeout");
      }
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  imageUrl(id: string): string {
    return `${this.baseUrl}/sessions/${id}/image`;
  }

  overlayUrl(id: string, version: number): string {
    return `${this.baseUrl}/sessions/${id}/overlay.png?v=${version}`;
  }

  meshUrl(id: string, version: number): string {
    return `${this.baseUrl}/sessions/${id}/mesh.obj?v=${version}`;
  }
}
