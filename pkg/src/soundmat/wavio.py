"""PCM16 conversion, linear resampling, and WAV file I/O.

Accepted files are 16-bit PCM mono at any rate; everything is brought
to the canonical 16 kHz with linear interpolation before feature
extraction.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import EmptyInput, UnreadableWav


def pcm16_encode(samples: np.ndarray) -> bytes:
    """Float samples in [-1, 1] -> little-endian signed 16-bit bytes."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    return ints.tobytes()


def pcm16_decode(data: bytes) -> np.ndarray:
    if len(data) % 2 != 0:
        raise EmptyInput("PCM16 byte length must be even")
    if len(data) == 0:
        raise EmptyInput("no PCM data")
    ints = np.frombuffer(data, dtype="<i2")
    return ints.astype(np.float64) / 32768.0


def resample_linear(samples: np.ndarray, src_rate_hz: int, dst_rate_hz: int) -> np.ndarray:
    if src_rate_hz <= 0 or dst_rate_hz <= 0:
        raise ValueError("rates must be positive")
    samples = np.asarray(samples, dtype=np.float64)
    if src_rate_hz == dst_rate_hz:
        return samples.copy()
    n_out = int(round(len(samples) * dst_rate_hz / src_rate_hz))
    positions = np.arange(n_out) * (src_rate_hz / dst_rate_hz)
    return np.interp(positions, np.arange(len(samples)), samples)


def load_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM mono WAV; returns (samples in [-1, 1], rate)."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getsampwidth() != 2:
                raise UnreadableWav(f"{path}: not 16-bit PCM")
            if wf.getnchannels() != 1:
                raise UnreadableWav(f"{path}: not mono")
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except UnreadableWav:
        raise
    except (wave.Error, EOFError, OSError) as exc:
        raise UnreadableWav(f"{path}: {exc}") from exc
    if not frames:
        raise UnreadableWav(f"{path}: empty file")
    return pcm16_decode(frames), rate


def save_wav(path: str | Path, samples: np.ndarray, rate_hz: int) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate_hz)
        wf.writeframes(pcm16_encode(samples))
