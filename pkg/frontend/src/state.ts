// UI state derived purely from server envelopes. The reducer never
// predicts: counts, mode, probabilities, and the highlight all come
// from (or are computed over) what the server sent.

import { Envelope, ConnectionStatus } from "./protocol.js";
import { N_ACTIONS } from "./actions.js";

export type Mode = "training" | "training_in_progress" | "inference";

export interface TrainingInfo {
  state: "started" | "done" | "error";
  durationMs: number;
  errorMsg?: string;
}

export interface UiState {
  mode: Mode;
  connection: ConnectionStatus;
  counts: number[]; // per action id
  probs: number[] | null; // per action id, inference only
  highlighted: number | null; // tie-broken argmax of probs
  zone: number | null;
  training: TrainingInfo | null;
  lastError: string | null;
}

export function initialState(): UiState {
  return {
    mode: "training",
    connection: "connecting",
    counts: new Array(N_ACTIONS).fill(0),
    probs: null,
    highlighted: null,
    zone: null,
    training: null,
    lastError: null,
  };
}

// argmax with ties resolved toward the lowest action id, mirroring the server
export function argmaxLowestId(probs: number[]): number {
  let best = 0;
  for (let i = 1; i < probs.length; i++) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

export function nonEmptyClassCount(counts: number[]): number {
  return counts.filter((c) => c > 0).length;
}

export function applyServerEnvelope(state: UiState, env: Envelope): UiState {
  const next = { ...state, counts: [...state.counts] };
  const p = env.payload as Record<string, any>;
  switch (env.type) {
    case "MODE_CHANGED": {
      next.mode = p.mode as Mode;
      if (next.mode !== "inference") {
        next.probs = null;
        next.highlighted = null;
      }
      break;
    }
    case "RECORD_ACK": {
      next.counts[p.action_id as number] = p.count as number;
      break;
    }
    case "ZONE_CHANGED": {
      next.zone = (p.action_id ?? null) as number | null;
      break;
    }
    case "TRAIN_STATUS": {
      next.training = {
        state: p.state,
        durationMs: p.duration_ms ?? 0,
        errorMsg: p.error_msg,
      };
      if (p.state === "error" && p.error_msg) next.lastError = String(p.error_msg);
      break;
    }
    case "INFER_RESULT": {
      const probs = new Array(N_ACTIONS).fill(0);
      for (const [key, value] of Object.entries(p.probs as Record<string, number>)) {
        probs[Number(key)] = value;
      }
      next.probs = probs;
      next.highlighted = argmaxLowestId(probs);
      break;
    }
    case "ERROR": {
      next.lastError = `${p.code}: ${p.message}`;
      break;
    }
    default:
      break; // ACTION_COMMAND etc. are for devices
  }
  return next;
}
