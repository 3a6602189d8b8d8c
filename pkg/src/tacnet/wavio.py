"""16-bit PCM mono WAV read/write on top of the stdlib ``wave`` module."""
from __future__ import annotations

import wave

import numpy as np

from .errors import WavFormatError
from .signal_core import Waveform


def read_wav(path, expected_rate: int | None = None) -> Waveform:
    """Read a PCM16 mono file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getcomptype() != "NONE":
                raise WavFormatError(f"{path}: compressed WAV ({fh.getcomptype()}) not supported")
            if fh.getnchannels() != 1:
                raise WavFormatError(f"{path}: expected mono, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * fh.getsampwidth()}-bit")
            rate = fh.getframerate()
            frames = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (no resampling)")
    pcm = np.frombuffer(frames, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, wav: Waveform) -> None:
    pcm = np.clip(np.round(wav.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wav.sample_rate_hz)
        fh.writeframes(pcm.tobytes())
