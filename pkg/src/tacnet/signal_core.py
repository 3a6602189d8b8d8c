"""Waveform containers, source mixing, windowing and mode labeling.

Everything here is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, EmptyResultError, ValidationError

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class ActivityMask:
    """Half-open ``[start, end)`` sample ranges during which one source is active."""

    intervals: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        ivs = tuple((int(a), int(b)) for a, b in self.intervals)
        prev_end = 0
        for a, b in ivs:
            if not 0 <= a < b:
                raise ValidationError(f"invalid interval [{a}, {b})")
            if a < prev_end:
                raise ValidationError("intervals must be sorted and non-overlapping")
            prev_end = b
        object.__setattr__(self, "intervals", ivs)

    def validate(self, total_len: int) -> None:
        for a, b in self.intervals:
            if b > total_len:
                raise ValidationError(
                    f"interval [{a}, {b}) exceeds signal length {total_len}")

    def to_list(self) -> list[list[int]]:
        return [[a, b] for a, b in self.intervals]


@dataclass(frozen=True)
class WindowConfig:
    window_ms: float = 25.0
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if not self.window_ms > 0:
            raise ConfigurationError(f"window_ms must be > 0, got {self.window_ms}")
        if int(self.sample_rate_hz) <= 0:
            raise ConfigurationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.length < 1:
            raise ConfigurationError(
                f"{self.window_ms} ms at {self.sample_rate_hz} Hz is shorter than one sample")

    @property
    def length(self) -> int:
        """Window length L in samples."""
        return int(round(self.window_ms * self.sample_rate_hz / 1000.0))

    def to_dict(self) -> dict:
        return {"window_ms": float(self.window_ms), "sample_rate_hz": int(self.sample_rate_hz)}


@dataclass(frozen=True)
class LabeledChunk:
    samples: np.ndarray
    label: int


def mix_sources(sources: Sequence[Waveform]) -> Waveform:
    """Sum equal-length sources sample by sample. No renormalization is applied."""
    if len(sources) == 0:
        raise ConfigurationError("mix_sources needs at least one source")
    first = sources[0]
    for s in sources[1:]:
        if s.sample_rate_hz != first.sample_rate_hz:
            raise ConfigurationError(
                f"sample rate mismatch: {first.sample_rate_hz} vs {s.sample_rate_hz}")
        if len(s) != len(first):
            raise ConfigurationError(f"length mismatch: {len(first)} vs {len(s)}")
    total = np.sum(np.stack([s.samples for s in sources]), axis=0)
    return Waveform(total, first.sample_rate_hz)


def make_windows(total_len: int, cfg: WindowConfig) -> list[tuple[int, int]]:
    """Contiguous, non-overlapping ``(start, end)`` windows; the short tail is dropped."""
    L = cfg.length
    if total_len < L:
        raise EmptyResultError(
            f"input shorter than one window: {total_len} samples < L={L}")
    return [(k * L, (k + 1) * L) for k in range(total_len // L)]


def active_count_per_sample(masks: Sequence[ActivityMask], total_len: int) -> np.ndarray:
    # difference array: +1 at each start, -1 at each end
    diff = np.zeros(total_len + 1, dtype=np.int64)
    for mask in masks:
        mask.validate(total_len)
        for a, b in mask.intervals:
            diff[a] += 1
            diff[b] -= 1
    return np.cumsum(diff[:-1])


def label_chunk_mode(counts) -> int:
    """Most frequent value of ``counts``; ties go to the smaller count."""
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValidationError("cannot take the mode of an empty vector")
    if np.any(counts < 0):
        raise ValidationError("counts must be nonnegative")
    # bincount + argmax returns the first (smallest) maximal index
    return int(np.argmax(np.bincount(counts.astype(np.int64))))


def segment_and_label(mixture: Waveform, masks: Sequence[ActivityMask],
                      cfg: WindowConfig) -> list[LabeledChunk]:
    if mixture.sample_rate_hz != cfg.sample_rate_hz:
        raise ConfigurationError(
            f"sample rate mismatch: mixture {mixture.sample_rate_hz} vs window {cfg.sample_rate_hz}")
    windows = make_windows(len(mixture), cfg)
    counts = active_count_per_sample(masks, len(mixture))
    return [LabeledChunk(mixture.samples[a:b].copy(), label_chunk_mode(counts[a:b]))
            for a, b in windows]
