"""PCM conversion, linear resampling, and WAV round trips."""

import wave

import numpy as np
import pytest

from soundmat.errors import EmptyInput, UnreadableWav
from soundmat.wavio import (
    load_wav,
    pcm16_decode,
    pcm16_encode,
    resample_linear,
    save_wav,
)


def test_pcm16_round_trip_close():
    rng = np.random.default_rng(1)
    samples = rng.uniform(-1, 1, 4000)
    recovered = pcm16_decode(pcm16_encode(samples))
    assert recovered.shape == samples.shape
    # encode scales by 32767, decode by 32768: bound is ~1.5/32768
    assert np.max(np.abs(recovered - samples)) < 1.0 / 16000


def test_pcm16_clamps_out_of_range():
    recovered = pcm16_decode(pcm16_encode(np.array([4.0, -4.0])))
    assert abs(recovered[0] - 1.0) < 1e-3
    assert abs(recovered[1] + 1.0) < 1e-3


def test_pcm16_rejects_odd_or_empty():
    with pytest.raises(EmptyInput):
        pcm16_decode(b"\x00")
    with pytest.raises(EmptyInput):
        pcm16_decode(b"")


def test_resample_identity():
    samples = np.arange(100, dtype=float)
    out = resample_linear(samples, 16000, 16000)
    assert np.array_equal(out, samples)


def test_resample_linear_matches_interp_on_ramp():
    # a linear ramp is reproduced exactly by linear interpolation
    samples = np.linspace(0.0, 1.0, 22050)
    out = resample_linear(samples, 22050, 16000)
    assert len(out) == 16000
    expected = np.interp(np.arange(16000) * (22050 / 16000),
                         np.arange(22050), samples)
    assert np.array_equal(out, expected)
    assert np.max(np.abs(out - np.linspace(0.0, 1.0, 22050)[
        np.minimum((np.arange(16000) * 22050 // 16000), 22049)])) < 1e-3


def test_resample_doubles_length():
    out = resample_linear(np.zeros(8000), 8000, 16000)
    assert len(out) == 16000


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    samples = rng.uniform(-0.9, 0.9, 16000)
    path = tmp_path / "clip.wav"
    save_wav(path, samples, 16000)
    loaded, rate = load_wav(path)
    assert rate == 16000
    assert np.max(np.abs(loaded - samples)) < 1.0 / 16000


def test_wav_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes(b"\x00\x00" * 200)
    with pytest.raises(UnreadableWav):
        load_wav(path)


def test_wav_rejects_eight_bit(tmp_path):
    path = tmp_path / "eightbit.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(16000)
        wf.writeframes(b"\x80" * 100)
    with pytest.raises(UnreadableWav):
        load_wav(path)


def test_wav_rejects_garbage(tmp_path):
    path = tmp_path / "garbage.wav"
    path.write_bytes(b"this is not a wav file")
    with pytest.raises(UnreadableWav):
        load_wav(path)


def test_wav_rejects_empty(tmp_path):
    path = tmp_path / "empty.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(16000)
    with pytest.raises(UnreadableWav):
        load_wav(path)
