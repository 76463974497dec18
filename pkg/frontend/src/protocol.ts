// Wire protocol client: one JSON envelope per WebSocket text frame.
// The socket is injectable so tests can drive the app with `ws` or a fake.

export interface Envelope {
  type: string;
  session_id: string;
  seq: number;
  payload: Record<string, unknown>;
}

export type ConnectionStatus = "connecting" | "connected" | "lost";

// the subset of the browser WebSocket surface the client needs;
// the `ws` package implements the same property-style handlers
export interface WsLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WsLike;

export const PROTOCOL_VERSION = 1;

export interface ClientHandlers {
  onEnvelope: (env: Envelope) => void;
  onStatus: (status: ConnectionStatus) => void;
}

export class ProtocolClient {
  private socket: WsLike | null = null;
  private seq = 0;

  constructor(
    private readonly url: string,
    private readonly sessionId: string,
    private readonly factory: SocketFactory,
    private readonly handlers: ClientHandlers,
  ) {}

  connect(): Promise<void> {
    this.handlers.onStatus("connecting");
    return new Promise((resolve, reject) => {
      let settled = false;
      const socket = this.factory(this.url);
      this.socket = socket;
      socket.onopen = () => {
        settled = true;
        this.handlers.onStatus("connected");
        this.send("HELLO", { client_kind: "ui", protocol_version: PROTOCOL_VERSION });
        resolve();
      };
      socket.onmessage = (ev) => {
        const env = parseEnvelope(ev.data);
        if (env) this.handlers.onEnvelope(env);
      };
      socket.onclose = () => {
        this.handlers.onStatus("lost");
        if (!settled) reject(new Error(`connection to ${this.url} closed during handshake`));
      };
      socket.onerror = () => {
        this.handlers.onStatus("lost");
        if (!settled) reject(new Error(`cannot connect to ${this.url}`));
      };
    });
  }

  send(type: string, payload: Record<string, unknown>): void {
    if (!this.socket) throw new Error("not connected");
    this.seq += 1;
    const env: Envelope = { type, session_id: this.sessionId, seq: this.seq, payload };
    this.socket.send(JSON.stringify(env));
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }
}

export function parseEnvelope(data: unknown): Envelope | null {
  if (typeof data !== "string") {
    data = String(data);
  }
  try {
    const doc = JSON.parse(data as string);
    if (
      doc &&
      typeof doc.type === "string" &&
      typeof doc.session_id === "string" &&
      typeof doc.seq === "number" &&
      doc.payload &&
      typeof doc.payload === "object"
    ) {
      return doc as Envelope;
    }
  } catch {
    // fall through: a malformed server frame is dropped, not fatal
  }
  return null;
}
