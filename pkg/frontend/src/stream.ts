// WebSocket live feed with auto-reconnect. The WebSocket constructor is
// injectable so tests can run under node with the ws package.

import type { StreamEvent } from "./api";

export type WebSocketLike = {
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  close(): void;
};

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface FeedHandlers {
  onEvent: (event: StreamEvent) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
}

export class LiveFeed {
  private socket: WebSocketLike | null = null;
  private stopped = false;
  private retryMs = 500;

  constructor(
    private url: string,
    private handlers: FeedHandlers,
    private factory: WebSocketFactory,
  ) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  private connect(): void {
    this.handlers.onStatus("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.retryMs = 500;
      this.handlers.onStatus("open");
    };
    socket.onmessage = (ev) => {
      try {
        const event = JSON.parse(String(ev.data)) as StreamEvent;
        if (event && event.kind && event.payload) {
          this.handlers.onEvent(event);
        }
      } catch {
        // tolerate malformed frames
      }
    };
    socket.onerror = () => socket.close();
    socket.onclose = () => {
      this.handlers.onStatus("closed");
      if (!this.stopped) {
        const wait = this.retryMs;
        this.retryMs = Math.min(this.retryMs * 2, 8000);
        setTimeout(() => {
          if (!this.stopped) {
            this.connect();
          }
        }, wait);
      }
    };
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
  }
}

export function wsUrl(base: string, path: string): string {
  if (base.startsWith("http")) {
    return base.replace(/^http/, "ws") + path;
  }
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}${path}`;
}
