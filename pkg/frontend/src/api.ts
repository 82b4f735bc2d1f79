// Typed client for the session service. Every request goes through one
// helper so tests can record and contract-check the exact traffic.

import type {
  CreateSessionRequest,
  MemoryListing,
  SessionSummary,
  SessionView,
  TranscriptEvent,
} from "./types.js";
import { subscribeSse } from "./sse.js";

export interface RecordedRequest {
  method: string;
  path: string;
  body?: unknown;
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

export type RequestHook = (request: RecordedRequest) => void;

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private onRequest?: RequestHook,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    this.onRequest?.({ method, path, body });
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request("GET", "/sessions");
  }

  createSession(body: CreateSessionRequest): Promise<{ session_id: string; state: string }> {
    return this.request("POST", "/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  sendFeedback(sessionId: string, text: string): Promise<{ accepted: boolean }> {
    return this.request("POST", `/sessions/${sessionId}/feedback`, { text });
  }

  approve(sessionId: string): Promise<{ accepted: boolean }> {
    return this.request("POST", `/sessions/${sessionId}/approve`);
  }

  skip(sessionId: string): Promise<{ accepted: boolean }> {
    return this.request("POST", `/sessions/${sessionId}/skip`);
  }

  getMemory(sessionId: string): Promise<MemoryListing> {
    return this.request("GET", `/sessions/${sessionId}/memory`);
  }

  /** Subscribe to the transcript stream; returns an abort function. */
  streamEvents(
    sessionId: string,
    onEvent: (event: TranscriptEvent, id: number) => void,
    after = 0,
  ): () => void {
    const path = `/sessions/${sessionId}/events${after ? `?after=${after}` : ""}`;
    this.onRequest?.({ method: "GET", path });
    return subscribeSse(`${this.baseUrl}${path}`, (frame) => {
      if (frame.event === "end") return;
      onEvent(JSON.parse(frame.data) as TranscriptEvent, frame.id ?? -1);
    }, this.fetchImpl);
  }
}
