// Websocket client: keeps only the newest validated state, rate-limits
// outgoing control messages, reconnects with backoff, and measures the
// input -> next-reflected-state round trip.

import { InputMessage, parseServerMessage, StateMessage } from './protocol';

export const MAX_SEND_HZ = 30;
export const STALE_AFTER_MS = 1000;

export type ConnectionStatus = 'connecting' | 'connected' | 'stale' | 'disconnected';

export interface ConnectionEvents {
  onState?: (state: StateMessage) => void;
  onServerError?: (reason: string) => void;
  onInvalid?: (detail: string) => void;
  onStatus?: (status: ConnectionStatus) => void;
  onLatency?: (ms: number) => void;
}

type WebSocketLike = {
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
};

export class SimConnection {
  latest: StateMessage | null = null;
  status: ConnectionStatus = 'disconnected';
  lastLatencyMs: number | null = null;

  private ws: WebSocketLike | null = null;
  private url: string;
  private events: ConnectionEvents;
  private makeSocket: (url: string) => WebSocketLike;
  private reconnectDelay = 500;
  private closed = false;
  private staleTimer: ReturnType<typeof setTimeout> | null = null;

  // per-channel rate limiting with trailing edge so the last value always lands
  private lastSent = new Map<string, number>();
  private pending = new Map<string, { msg: InputMessage; timer: ReturnType<typeof setTimeout> }>();
  private awaitingReflection: number | null = null;

  constructor(url: string, events: ConnectionEvents = {},
              makeSocket?: (url: string) => WebSocketLike) {
    this.url = url;
    this.events = events;
    this.makeSocket = makeSocket ?? ((u) => new WebSocket(u) as unknown as WebSocketLike);
  }

  connect(): void {
    this.closed = false;
    this.setStatus('connecting');
    this.openSocket();
  }

  close(): void {
    this.closed = true;
    if (this.staleTimer) clearTimeout(this.staleTimer);
    this.ws?.close();
    this.setStatus('disconnected');
  }

  private openSocket(): void {
    const ws = this.makeSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.reconnectDelay = 500;
      this.setStatus('connected');
    };
    ws.onmessage = (ev) => this.handleMessage(String(ev.data));
    ws.onerror = () => undefined;
    ws.onclose = () => {
      if (this.closed) return;
      this.setStatus('disconnected');
      const delay = this.reconnectDelay;
      this.reconnectDelay = Math.min(this.reconnectDelay * 2, 15000);
      setTimeout(() => {
        if (!this.closed) {
          this.setStatus('connecting');
          this.openSocket();
        }
      }, delay);
    };
  }

  private handleMessage(raw: string): void {
    const parsed = parseServerMessage(raw);
    if (parsed.kind === 'state') {
      this.latest = parsed.state;  // only the newest frame is kept
      if (this.status !== 'connected') this.setStatus('connected');
      this.armStaleTimer();
      if (this.awaitingReflection !== null) {
        this.lastLatencyMs = performance.now() - this.awaitingReflection;
        this.awaitingReflection = null;
        this.events.onLatency?.(this.lastLatencyMs);
        console.debug(`input round-trip ${this.lastLatencyMs.toFixed(1)} ms`);
      }
      this.events.onState?.(parsed.state);
    } else if (parsed.kind === 'error') {
      this.events.onServerError?.(parsed.reason);
    } else {
      this.events.onInvalid?.(parsed.detail);
    }
  }

  private armStaleTimer(): void {
    if (this.staleTimer) clearTimeout(this.staleTimer);
    this.staleTimer = setTimeout(() => {
      if (this.status === 'connected') this.setStatus('stale');
    }, STALE_AFTER_MS);
  }

  private setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }

  get isConnected(): boolean {
    return this.status === 'connected' || this.status === 'stale';
  }

  /**
   * Send a control message, rate limited per channel to MAX_SEND_HZ with a
   * trailing send, so slider drags cannot flood the service but the final
   * value always arrives.
   */
  sendInput(msg: InputMessage): void {
    if (!this.ws || !this.isConnected) return;
    const channel = msg.type === 'tension' ? `tension:${msg.cable}` : msg.type;
    const now = performance.now();
    const minInterval = 1000 / MAX_SEND_HZ;
    const last = this.lastSent.get(channel) ?? -Infinity;

    const existing = this.pending.get(channel);
    if (existing) {
      existing.msg = msg;  // trailing edge keeps only the newest value
      return;
    }
    if (now - last >= minInterval) {
      this.transmit(channel, msg, now);
    } else {
      const timer = setTimeout(() => {
        const entry = this.pending.get(channel);
        this.pending.delete(channel);
        if (entry) this.transmit(channel, entry.msg, performance.now());
      }, minInterval - (now - last));
      this.pending.set(channel, { msg, timer });
    }
  }

  private transmit(channel: string, msg: InputMessage, now: number): void {
    this.lastSent.set(channel, now);
    this.awaitingReflection = now;
    this.ws?.send(JSON.stringify(msg));
  }
}
