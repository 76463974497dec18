// The control surface: a 3x2 action-button grid mirroring the mat,
// recording counts in each button's corner, live probabilities with
// the top action darkened during inference, and the train/reset/return
// controls. Everything rendered is state derived from server messages.

import { ACTION_ICONS, ACTION_LABELS, ACTION_NAMES, N_ACTIONS } from "./actions.js";
import { CaptureSource, TARGET_RATE_HZ, floatToPcm16Base64 } from "./audio.js";
import { Envelope, ProtocolClient, SocketFactory } from "./protocol.js";
import {
  UiState,
  applyServerEnvelope,
  initialState,
  nonEmptyClassCount,
} from "./state.js";

export const CAPTURE_PERIOD_MS = 2500;
export const CAPTURE_DURATION_S = 1.0;

export interface Scheduler {
  schedule(fn: () => void, ms: number): number;
  cancel(id: number): void;
}

const defaultScheduler: Scheduler = {
  schedule: (fn, ms) => setTimeout(fn, ms) as unknown as number,
  cancel: (id) => clearTimeout(id as unknown as ReturnType<typeof setTimeout>),
};

export interface AppOptions {
  serverUrl: string;
  sessionId: string;
  socketFactory?: SocketFactory;
  captureSource: CaptureSource;
  scheduler?: Scheduler;
  onStateChange?: (state: UiState) => void;
}

export class App {
  state: UiState = initialState();
  readonly client: ProtocolClient;
  private readonly scheduler: Scheduler;
  private readonly capture: CaptureSource;
  private readonly doc: Document;
  private captureTimer: number | null = null;
  private inferInFlight = false;
  private recording = false;
  private actionButtons: HTMLButtonElement[] = [];
  private trainButton!: HTMLButtonElement;
  private resetButton!: HTMLButtonElement;
  private returnButton!: HTMLButtonElement;
  private modeLine!: HTMLElement;
  private resultIcon!: HTMLElement;

  constructor(private readonly root: HTMLElement, private readonly options: AppOptions) {
    const factory =
      options.socketFactory ??
      ((url: string) => new WebSocket(url) as unknown as ReturnType<SocketFactory>);
    this.scheduler = options.scheduler ?? defaultScheduler;
    this.capture = options.captureSource;
    this.doc = root.ownerDocument;
    this.client = new ProtocolClient(options.serverUrl, options.sessionId, factory, {
      onEnvelope: (env) => this.handleEnvelope(env),
      onStatus: (status) => this.setState({ ...this.state, connection: status }),
    });
    this.buildDom();
    this.doc.addEventListener("visibilitychange", () => this.syncCaptureLoop());
    this.render();
  }

  async start(): Promise<void> {
    await this.client.connect();
  }

  stop(): void {
    this.stopCaptureLoop();
    this.client.close();
  }

  // -- server messages -------------------------------------------------------

  private handleEnvelope(env: Envelope): void {
    if (env.type === "INFER_RESULT") this.inferInFlight = false;
    this.setState(applyServerEnvelope(this.state, env));
  }

  private setState(state: UiState): void {
    const modeChanged = state.mode !== this.state.mode;
    this.state = state;
    if (modeChanged) this.syncCaptureLoop();
    this.render();
    this.options.onStateChange?.(state);
  }

  // -- user actions ----------------------------------------------------------

  async recordViaButton(actionId: number): Promise<void> {
    if (this.state.mode !== "training" || this.recording) return;
    this.recording = true;
    this.render();
    try {
      const samples = await this.capture.capture(CAPTURE_DURATION_S);
      this.client.send("RECORD_SAMPLE", {
        action_id: actionId,
        pcm_b64: floatToPcm16Base64(samples),
        sample_rate_hz: TARGET_RATE_HZ,
      });
    } finally {
      this.recording = false;
      this.render();
    }
  }

  trainRequested(): void {
    // mirror of the server guard: never ask with fewer than 2 classes
    if (this.state.mode !== "training" || nonEmptyClassCount(this.state.counts) < 2) return;
    this.client.send("TRAIN_REQUEST", {});
  }

  resetRequested(): void {
    if (this.state.mode !== "training") return;
    this.client.send("RESET_ALL", {});
  }

  returnToRecording(): void {
    if (this.state.mode !== "inference") return;
    this.client.send("MODE_BUTTON", {});
  }

  // -- inference capture loop --------------------------------------------------

  private syncCaptureLoop(): void {
    const shouldRun = this.state.mode === "inference" && !this.doc.hidden;
    if (shouldRun && this.captureTimer === null) {
      this.captureTimer = this.scheduler.schedule(() => this.captureCycle(), 0);
    } else if (!shouldRun) {
      this.stopCaptureLoop();
    }
  }

  private stopCaptureLoop(): void {
    if (this.captureTimer !== null) {
      this.scheduler.cancel(this.captureTimer);
      this.captureTimer = null;
    }
  }

  private async captureCycle(): Promise<void> {
    if (this.state.mode !== "inference" || this.doc.hidden) {
      this.captureTimer = null;
      return;
    }
    this.captureTimer = this.scheduler.schedule(() => this.captureCycle(), CAPTURE_PERIOD_MS);
    if (this.inferInFlight) return; // one outstanding request at a time
    const samples = await this.capture.capture(CAPTURE_DURATION_S);
    if (this.state.mode !== "inference") return;
    this.inferInFlight = true;
    this.client.send("INFER_REQUEST", {
      pcm_b64: floatToPcm16Base64(samples),
      sample_rate_hz: TARGET_RATE_HZ,
    });
  }

  // -- rendering ----------------------------------------------------------------

  private buildDom(): void {
    const doc = this.doc;
    this.root.classList.add("soundmat-app");

    this.modeLine = doc.createElement("header");
    this.modeLine.className = "mode-line";
    this.root.appendChild(this.modeLine);

    const grid = doc.createElement("div");
    grid.className = "action-grid";
    for (let i = 0; i < N_ACTIONS; i++) {
      const button = doc.createElement("button");
      button.className = "action-button";
      button.dataset.action = String(i);
      button.dataset.name = ACTION_NAMES[i];

      const icon = doc.createElement("span");
      icon.className = "icon";
      icon.textContent = ACTION_ICONS[i];
      const label = doc.createElement("span");
      label.className = "label";
      label.textContent = ACTION_LABELS[i];
      const prob = doc.createElement("span");
      prob.className = "prob";
      const count = doc.createElement("span");
      count.className = "count";
      count.textContent = "0";

      button.append(icon, label, prob, count);
      button.addEventListener("click", () => void this.recordViaButton(i));
      grid.appendChild(button);
      this.actionButtons.push(button);
    }
    this.root.appendChild(grid);

    const controls = doc.createElement("div");
    controls.className = "controls";
    this.trainButton = doc.createElement("button");
    this.trainButton.id = "train-button";
    this.trainButton.textContent = "Train an AI";
    this.trainButton.addEventListener("click", () => this.trainRequested());
    this.resetButton = doc.createElement("button");
    this.resetButton.id = "reset-button";
    this.resetButton.textContent = "Reset recordings";
    this.resetButton.addEventListener("click", () => this.resetRequested());
    this.returnButton = doc.createElement("button");
    this.returnButton.id = "return-button";
    this.returnButton.textContent = "Return to Recording";
    this.returnButton.addEventListener("click", () => this.returnToRecording());
    controls.append(this.trainButton, this.resetButton, this.returnButton);
    this.root.appendChild(controls);

    const footer = doc.createElement("footer");
    footer.className = "result-line";
    this.resultIcon = doc.createElement("span");
    this.resultIcon.className = "result-icon";
    footer.appendChild(this.resultIcon);
    this.root.appendChild(footer);
  }

  private render(): void {
    const { state } = this;
    const inTraining = state.mode === "training";
    const inInference = state.mode === "inference";

    const modeText =
      state.mode === "training_in_progress" ? "training…" : state.mode;
    this.modeLine.textContent = `${modeText} · ${state.connection}`;
    this.modeLine.dataset.mode = state.mode;
    this.modeLine.dataset.connection = state.connection;

    for (let i = 0; i < N_ACTIONS; i++) {
      const button = this.actionButtons[i];
      button.disabled = !inTraining || this.recording;
      (button.querySelector(".count") as HTMLElement).textContent = String(state.counts[i]);
      const prob = button.querySelector(".prob") as HTMLElement;
      prob.textContent =
        inInference && state.probs ? `${Math.round(state.probs[i] * 100)}%` : "";
      button.classList.toggle("darkened", inInference && state.highlighted === i);
    }

    this.trainButton.disabled = !inTraining || nonEmptyClassCount(state.counts) < 2;
    this.resetButton.disabled = !inTraining;
    this.returnButton.disabled = !inInference;
    this.returnButton.hidden = !inInference;

    this.resultIcon.textContent =
      inInference && state.highlighted !== null ? ACTION_ICONS[state.highlighted] : "";
  }
}

export function createApp(root: HTMLElement, options: AppOptions): App {
  return new App(root, options);
}
