"""Log-mel feature front-end for one-second sound clips.

A clip is exactly one second of mono PCM at its stated rate (canonical
16 kHz). Features are per-band statistics over a log-mel spectrogram:
mean, population standard deviation, and mean absolute frame-to-frame
delta, concatenated block by block (band-major within each block).
Everything here is a pure function of its inputs; identical inputs give
bitwise-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ConfigInvalid, EmptyInput

CANONICAL_RATE_HZ = 16000


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Exactly ``sample_rate_hz`` finite samples in [-1, +1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ConfigInvalid("sample rate must be positive")
        if self.samples.ndim != 1 or len(self.samples) != self.sample_rate_hz:
            raise ConfigInvalid(
                f"clip must hold exactly {self.sample_rate_hz} samples, "
                f"got {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ConfigInvalid("clip samples must be finite")
        if np.any(self.samples < -1.0) or np.any(self.samples > 1.0):
            raise ConfigInvalid("clip samples must lie in [-1, +1]")

    @property
    def duration_s(self) -> float:
        return 1.0


@dataclass(frozen=True)
class FeatureConfig:
    window_s: float = 0.025
    hop_s: float = 0.010
    n_fft: int = 512
    n_bands: int = 32
    fmin_hz: float = 125.0
    fmax_hz: float = 7500.0
    energy_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not (0 < self.hop_s <= self.window_s):
            raise ConfigInvalid("need 0 < hop_s <= window_s")
        if self.n_fft <= 0 or self.n_bands <= 0:
            raise ConfigInvalid("n_fft and n_bands must be positive")
        if not (0 <= self.fmin_hz < self.fmax_hz):
            raise ConfigInvalid("need 0 <= fmin_hz < fmax_hz")
        if self.energy_floor <= 0:
            raise ConfigInvalid("energy_floor must be positive")

    @property
    def feature_dim(self) -> int:
        return 3 * self.n_bands


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """Log-energy frames, shape (n_frames, n_bands); values >= log(floor)."""

    frames: np.ndarray
    frame_hop_s: float
    band_edges_hz: np.ndarray


def validate_clip(raw_samples, rate_hz: int) -> AudioClip:
    """Coerce an arbitrary-length sample sequence into a 1-second clip.

    Shorter inputs are zero-padded at the end, longer inputs truncated;
    samples are clamped to [-1, +1] and non-finite values become 0.
    """
    if rate_hz <= 0:
        raise ConfigInvalid("sample rate must be positive")
    samples = np.asarray(raw_samples, dtype=np.float64)
    if samples.ndim != 1:
        samples = samples.reshape(-1)
    if samples.size == 0:
        raise EmptyInput("no samples supplied")
    samples = np.nan_to_num(samples, nan=0.0, posinf=1.0, neginf=-1.0)
    samples = np.clip(samples, -1.0, 1.0)
    if len(samples) > rate_hz:
        samples = samples[:rate_hz]
    elif len(samples) < rate_hz:
        samples = np.concatenate(
            [samples, np.zeros(rate_hz - len(samples), dtype=np.float64)]
        )
    samples = np.ascontiguousarray(samples)
    samples.flags.writeable = False
    return AudioClip(samples=samples, sample_rate_hz=rate_hz)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig, rate_hz: int) -> tuple[np.ndarray, np.ndarray]:
    """Triangular filters, peak weight 1, centers equally spaced in mel.

    Returns (weights, edges_hz): weights has shape
    (n_bands, n_fft // 2 + 1); edges_hz is the ascending list of the
    n_bands + 2 mel-spaced corner frequencies. Filter i rises from
    edge i to edge i+1 and falls to edge i+2 (50% overlap).
    """
    if cfg.fmax_hz > rate_hz / 2:
        raise ConfigInvalid(
            f"fmax {cfg.fmax_hz} Hz exceeds Nyquist {rate_hz / 2} Hz"
        )
    edges_hz = mel_to_hz(
        np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_bands + 2)
    )
    n_bins = cfg.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (rate_hz / cfg.n_fft)
    weights = np.zeros((cfg.n_bands, n_bins), dtype=np.float64)
    for i in range(cfg.n_bands):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return weights, edges_hz


def _hann_periodic(length: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def compute_log_mel(clip: AudioClip, cfg: FeatureConfig) -> MelSpectrogram:
    """Hann-windowed frames -> magnitude-squared spectrum -> mel bands -> log.

    The log is applied after flooring each band energy at
    ``cfg.energy_floor``, so silence maps to log(floor) everywhere.
    """
    rate = clip.sample_rate_hz
    win = int(round(cfg.window_s * rate))
    hop = int(round(cfg.hop_s * rate))
    if win < 1 or hop < 1:
        raise ConfigInvalid("window and hop must span at least one sample")
    if win > cfg.n_fft:
        raise ConfigInvalid(f"window of {win} samples exceeds n_fft {cfg.n_fft}")
    if win > len(clip.samples):
        raise ConfigInvalid("window longer than clip")
    weights, edges_hz = mel_filterbank(cfg, rate)

    n_frames = 1 + (len(clip.samples) - win) // hop
    idx = hop * np.arange(n_frames)[:, None] + np.arange(win)[None, :]
    segments = clip.samples[idx] * _hann_periodic(win)[None, :]
    spectra = np.fft.rfft(segments, n=cfg.n_fft, axis=1)
    power = spectra.real**2 + spectra.imag**2
    energies = power @ weights.T
    frames = np.log(np.maximum(energies, cfg.energy_floor))
    return MelSpectrogram(frames=frames, frame_hop_s=cfg.hop_s, band_edges_hz=edges_hz)


def extract_features(clip: AudioClip, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Fixed-length feature vector: [band means | band stds | band deltas].

    Stds are population standard deviations; deltas are the mean of
    |frame_t - frame_{t-1}| per band (0 when the clip yields one frame).
    """
    cfg = cfg or FeatureConfig()
    mel = compute_log_mel(clip, cfg).frames
    means = mel.mean(axis=0)
    stds = mel.std(axis=0)
    if mel.shape[0] > 1:
        deltas = np.abs(np.diff(mel, axis=0)).mean(axis=0)
    else:
        deltas = np.zeros(cfg.n_bands, dtype=np.float64)
    return np.concatenate([means, stds, deltas])


@runtime_checkable
class FeatureExtractor(Protocol):
    """Anything that maps a clip to a fixed-length feature vector.

    The default is the deterministic log-mel pipeline below; a learned
    embedding can be swapped in behind the same two members.
    """

    @property
    def feature_dim(self) -> int: ...

    def extract(self, clip: AudioClip) -> np.ndarray: ...


class LogMelExtractor:
    def __init__(self, cfg: FeatureConfig | None = None) -> None:
        self.cfg = cfg or FeatureConfig()

    @property
    def feature_dim(self) -> int:
        return self.cfg.feature_dim

    def extract(self, clip: AudioClip) -> np.ndarray:
        return extract_features(clip, self.cfg)
