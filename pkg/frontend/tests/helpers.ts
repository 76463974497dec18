// Shared test plumbing: a scriptable fake socket and a manual scheduler.

import { Envelope, WsLike } from "../src/protocol.js";
import { Scheduler } from "../src/app.js";

export class FakeSocket implements WsLike {
  sent: Envelope[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(JSON.parse(data));
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  push(env: Envelope): void {
    this.onmessage?.({ data: JSON.stringify(env) });
  }

  pushPayload(type: string, payload: Record<string, unknown>, seq = 1): void {
    this.push({ type, session_id: "test", seq, payload });
  }

  sentOfType(type: string): Envelope[] {
    return this.sent.filter((env) => env.type === type);
  }
}

export class ManualScheduler implements Scheduler {
  private tasks = new Map<number, () => void>();
  private nextId = 1;

  schedule(fn: () => void, _ms: number): number {
    const id = this.nextId++;
    this.tasks.set(id, fn);
    return id;
  }

  cancel(id: number): void {
    this.tasks.delete(id);
  }

  flush(): void {
    const pending = [...this.tasks.values()];
    this.tasks.clear();
    for (const fn of pending) fn();
  }

  get pendingCount(): number {
    return this.tasks.size;
  }
}

export async function waitFor(
  predicate: () => boolean,
  timeoutMs = 15_000,
  what = "condition",
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!predicate()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((resolve) => setTimeout(resolve, 20));
  }
}

export function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
