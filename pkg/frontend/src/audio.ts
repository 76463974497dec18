// Capture sources and PCM encoding. The browser microphone path
// resamples to 16 kHz mono and base64-encodes little-endian int16, so
// the server always sees one canonical format. Tests inject a
// synthetic source instead of a microphone.

export const TARGET_RATE_HZ = 16000;

export interface CaptureSource {
  // one clip of durationS seconds, mono float32 at TARGET_RATE_HZ
  capture(durationS: number): Promise<Float32Array>;
}

export function resampleLinear(samples: Float32Array, srcRate: number, dstRate: number): Float32Array {
  if (srcRate === dstRate) return samples.slice();
  const nOut = Math.round((samples.length * dstRate) / srcRate);
  const out = new Float32Array(nOut);
  const step = srcRate / dstRate;
  for (let i = 0; i < nOut; i++) {
    const pos = i * step;
    const lo = Math.floor(pos);
    const hi = Math.min(lo + 1, samples.length - 1);
    const frac = pos - lo;
    out[i] = samples[lo] * (1 - frac) + samples[hi] * frac;
  }
  return out;
}

export function floatToPcm16Base64(samples: Float32Array): string {
  const bytes = new Uint8Array(samples.length * 2);
  const view = new DataView(bytes.buffer);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    view.setInt16(2 * i, Math.round(clamped * 32767), true);
  }
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export type SyntheticKind = "sine" | "noise" | "silence";

// deterministic stand-in for the microphone, switchable between sounds
export class SyntheticSource implements CaptureSource {
  kind: SyntheticKind = "sine";
  freqHz = 440;
  amplitude = 0.5;
  private noiseState = 123456789;

  async capture(durationS: number): Promise<Float32Array> {
    const n = Math.round(durationS * TARGET_RATE_HZ);
    const out = new Float32Array(n);
    if (this.kind === "sine") {
      for (let i = 0; i < n; i++) {
        out[i] = this.amplitude * Math.sin((2 * Math.PI * this.freqHz * i) / TARGET_RATE_HZ);
      }
    } else if (this.kind === "noise") {
      for (let i = 0; i < n; i++) {
        // xorshift32: deterministic across runs, no Math.random
        this.noiseState ^= this.noiseState << 13;
        this.noiseState ^= this.noiseState >>> 17;
        this.noiseState ^= this.noiseState << 5;
        this.noiseState |= 0;
        out[i] = this.amplitude * ((this.noiseState >>> 0) / 0xffffffff * 2 - 1);
      }
    }
    return out;
  }
}

// Real microphone: collect ScriptProcessor buffers for the duration,
// then resample whatever rate the AudioContext runs at down to 16 kHz.
export async function createMicrophoneSource(): Promise<CaptureSource> {
  const stream = await navigator.mediaDevices.getUserMedia({
    audio: { echoCancellation: true, noiseSuppression: true, channelCount: 1 },
  });
  const ctx = new AudioContext();
  const input = ctx.createMediaStreamSource(stream);
  return {
    capture(durationS: number): Promise<Float32Array> {
      return new Promise((resolve) => {
        const needed = Math.ceil(durationS * ctx.sampleRate);
        const collected: Float32Array[] = [];
        let total = 0;
        const processor = ctx.createScriptProcessor(4096, 1, 1);
        processor.onaudioprocess = (ev) => {
          const data = ev.inputBuffer.getChannelData(0);
          collected.push(new Float32Array(data));
          total += data.length;
          if (total >= needed) {
            processor.disconnect();
            input.disconnect(processor);
            const joined = new Float32Array(total);
            let offset = 0;
            for (const part of collected) {
              joined.set(part, offset);
              offset += part.length;
            }
            resolve(resampleLinear(joined.subarray(0, needed), ctx.sampleRate, TARGET_RATE_HZ));
          }
        };
        input.connect(processor);
        processor.connect(ctx.destination);
      });
    },
  };
}
