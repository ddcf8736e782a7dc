/** Thin client for the plantmas/v1 HTTP + server-sent-events surface.
 *
 * Both the fetch function and the EventSource constructor are injectable so
 * tests can run without a browser or a live server. */

import {
  Decision,
  PendingProposal,
  Snapshot,
  TraceRecord,
  parseRecord,
  validateDecision,
} from "./model.js";

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<any> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(body.error ?? `HTTP ${resp.status}`, resp.status);
    }
    return body;
  }

  getSnapshot(): Promise<Snapshot> {
    return this.request("/api/snapshot");
  }

  async getPending(): Promise<PendingProposal[]> {
    const body = await this.request("/api/proposals/pending");
    return body.proposals ?? [];
  }

  async submitDecision(decision: Decision): Promise<any> {
    const problem = validateDecision(decision);
    if (problem) {
      throw new ApiError(problem, 0);
    }
    return this.request("/api/decisions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(decision),
    });
  }

  chat(actor: string, command: string): Promise<any> {
    return this.request("/api/chat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ actor, command }),
    });
  }
}

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  addEventListener(type: string, listener: (ev: { data: string }) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface StreamCallbacks {
  onRecord: (rec: TraceRecord) => void;
  onEnd?: () => void;
  onReconnect?: (sinceSeq: number) => void;
}

/** Subscribes to /api/events and survives dropped connections by
 * reconnecting with ?since=<last seen seq>, so no record is missed or
 * delivered twice. */
export class EventStream {
  lastSeq = -1;
  private source: EventSourceLike | null = null;
  private closed = false;

  constructor(
    private readonly baseUrl: string,
    private readonly callbacks: StreamCallbacks,
    private readonly makeSource: EventSourceFactory =
      (url) => new (globalThis as any).EventSource(url),
    private readonly reconnectDelayMs = 1000,
  ) {}

  start(): void {
    if (this.closed) return;
    const url = `${this.baseUrl}/api/events?since=${this.lastSeq}`;
    this.source = this.makeSource(url);
    this.source.onmessage = (ev) => {
      const rec = parseRecord(ev.data);
      if (rec.seq <= this.lastSeq) return; // duplicate after reconnect
      this.lastSeq = rec.seq;
      this.callbacks.onRecord(rec);
    };
    this.source.addEventListener("end", () => {
      this.close();
      this.callbacks.onEnd?.();
    });
    this.source.onerror = () => {
      if (this.closed) return;
      this.source?.close();
      this.callbacks.onReconnect?.(this.lastSeq);
      setTimeout(() => this.start(), this.reconnectDelayMs);
    };
  }

  close(): void {
    this.closed = true;
    this.source?.close();
  }
}
