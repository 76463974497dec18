// Browser bootstrap: ?server=ws://host:port&session_id=demo

import { createApp } from "./app.js";
import { createMicrophoneSource, SyntheticSource, CaptureSource } from "./audio.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const serverUrl = params.get("server") ?? `ws://${window.location.hostname || "127.0.0.1"}:7441`;
  const sessionId = params.get("session_id") ?? "demo";

  let capture: CaptureSource;
  try {
    capture = await createMicrophoneSource();
  } catch (err) {
    console.warn("microphone unavailable, using a synthetic tone source", err);
    capture = new SyntheticSource();
  }

  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const app = createApp(root, { serverUrl, sessionId, captureSource: capture });
  await app.start();
}

void boot();
