"""Synthetic mixture generation, WAV corpus ingestion, manifests and chunking.

Manifest (JSON)::

    {
      "format_version": 1,
      "window": {"window_ms": 25.0, "sample_rate_hz": 16000},
      "max_count": 10,
      "label_mode": "activity" | "count",
      "note": "...",
      "records": [
        {"audio_path": "mix_00000.wav",          # relative to the manifest
         "sample_rate_hz": 16000, "duration_samples": 80000,
         "max_count": 10, "count": 3,             # nominal source count
         "split": "train" | "val" | "test",
         "sources": [{"id": "s0", "intervals": [[a, b], ...]}, ...]},
        ...
      ]
    }

With ``label_mode == "activity"`` chunk labels come from the per-source
intervals. With ``"count"`` every chunk of a record gets the record's
``count`` (ignores within-file silence).

Sidecar annotation (one JSON per WAV, same basename)::

    {"sample_rate": 16000, "duration_samples": 80000,
     "sources": [{"id": "s0", "intervals": [[a, b], ...]}, ...]}
"""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, TacnetError, ValidationError
from .signal_core import ActivityMask, LabeledChunk, Waveform, WindowConfig, segment_and_label
from .wavio import read_wav, write_wav

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
# 10-slot split pattern, 80/10/10 by file
_SPLIT_PATTERN = ("train",) * 4 + ("val",) + ("train",) * 4 + ("test",)
COUNT_MODE_NOTE = ("count-only labels: every chunk carries the file's speaker count; "
                   "silence inside the file is ignored")


@dataclass(frozen=True)
class SyntheticSourceConfig:
    """Amplitude-modulated harmonic complexes standing in for voices."""

    f0_range_hz: tuple[float, float] = (90.0, 300.0)
    n_harmonics: int = 8
    am_rate_range_hz: tuple[float, float] = (2.0, 8.0)
    am_depth: float = 0.5
    duty_range: tuple[float, float] = (0.5, 0.9)
    max_intervals: int = 4
    gain_jitter: tuple[float, float] = (0.7, 1.0)
    noise_level: float = 2e-3
    peak: float = 0.99

    def validate(self, sample_rate_hz: int) -> None:
        if self.f0_range_hz[1] * self.n_harmonics >= sample_rate_hz / 2:
            raise ConfigurationError("highest harmonic must stay below Nyquist")
        if not 0 < self.duty_range[0] <= self.duty_range[1] <= 1:
            raise ConfigurationError(f"invalid duty-cycle range {self.duty_range}")


@dataclass
class MixtureRecord:
    audio_path: str
    sample_rate_hz: int
    duration_samples: int
    max_count: int
    count: int
    sources: list[tuple[str, ActivityMask]] = field(default_factory=list)
    split: str = "train"

    def to_dict(self) -> dict:
        return {"audio_path": self.audio_path, "sample_rate_hz": self.sample_rate_hz,
                "duration_samples": self.duration_samples, "max_count": self.max_count,
                "count": self.count, "split": self.split,
                "sources": [{"id": sid, "intervals": m.to_list()} for sid, m in self.sources]}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureRecord":
        rec = cls(d["audio_path"], int(d["sample_rate_hz"]), int(d["duration_samples"]),
                  int(d["max_count"]), int(d["count"]),
                  [(s["id"], ActivityMask(tuple(map(tuple, s["intervals"])))) for s in d["sources"]],
                  d.get("split", "train"))
        rec.validate()
        return rec

    def validate(self) -> None:
        for _, mask in self.sources:
            mask.validate(self.duration_samples)
        if len(self.sources) > self.max_count or self.count > self.max_count:
            raise ValidationError(f"{self.audio_path}: source count exceeds max_count {self.max_count}")
        if self.split not in SPLITS:
            raise ValidationError(f"{self.audio_path}: unknown split {self.split!r}")

    @property
    def masks(self) -> list[ActivityMask]:
        return [m for _, m in self.sources]


@dataclass
class DatasetManifest:
    records: list[MixtureRecord]
    window: WindowConfig = field(default_factory=WindowConfig)
    max_count: int = 10
    label_mode: str = "activity"
    root: Path = field(default_factory=Path)
    format_version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        d = {"format_version": self.format_version, "window": self.window.to_dict(),
             "max_count": self.max_count, "label_mode": self.label_mode,
             "records": [r.to_dict() for r in self.records]}
        if self.label_mode == "count":
            d["note"] = COUNT_MODE_NOTE
        return d

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        d = json.loads(path.read_text())
        if d.get("format_version") != MANIFEST_VERSION:
            raise ConfigurationError(f"unsupported manifest version {d.get('format_version')}")
        return cls([MixtureRecord.from_dict(r) for r in d["records"]], WindowConfig(**d["window"]),
                   int(d["max_count"]), d.get("label_mode", "activity"), path.parent)

    def split(self, name: str) -> list[MixtureRecord]:
        return [r for r in self.records if r.split == name]

    def class_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(r.count for r in self.records).items()))

    def audio(self, record: MixtureRecord) -> Waveform:
        return read_wav(self.root / record.audio_path, expected_rate=record.sample_rate_hz)


def assign_splits(counts: list[int], seed: int) -> list[str]:
    """Per-file 80/10/10 split, interleaved across classes so each split sees every class."""
    rng = np.random.default_rng(seed)
    order = []
    for c in sorted(set(counts)):
        members = [i for i, k in enumerate(counts) if k == c]
        order.extend(rng.permutation(members).tolist())
    splits = [""] * len(counts)
    for slot, i in enumerate(order):
        splits[i] = _SPLIT_PATTERN[slot % len(_SPLIT_PATTERN)]
    return splits


# ------------------------------------------------------------------ synthesis

def random_activity_mask(total_len: int, rng: np.random.Generator,
                         cfg: SyntheticSourceConfig) -> ActivityMask:
    n_iv = int(rng.integers(1, cfg.max_intervals + 1))
    active = int(round(rng.uniform(*cfg.duty_range) * total_len))
    active = min(max(active, n_iv), total_len)
    idle = total_len - active
    lengths = _partition(active, n_iv, rng, minimum=1)
    gaps = _partition(idle, n_iv + 1, rng, minimum=0)
    intervals, pos = [], 0
    for gap, length in zip(gaps, lengths):
        pos += gap
        intervals.append((pos, pos + length))
        pos += length
    return ActivityMask(tuple(intervals))


def _partition(total: int, parts: int, rng, minimum: int) -> list[int]:
    spare = total - minimum * parts
    weights = rng.dirichlet(np.ones(parts))
    sizes = np.floor(weights * spare).astype(int)
    sizes[: spare - sizes.sum()] += 1
    return (sizes + minimum).tolist()


def synth_source(total_len: int, sample_rate_hz: int, gain: float, rng: np.random.Generator,
                 cfg: SyntheticSourceConfig) -> np.ndarray:
    t = np.arange(total_len) / sample_rate_hz
    f0 = rng.uniform(*cfg.f0_range_hz)
    tone = np.zeros(total_len)
    for k in range(1, cfg.n_harmonics + 1):
        tone += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
    am_rate = rng.uniform(*cfg.am_rate_range_hz)
    envelope = 1.0 - cfg.am_depth * 0.5 * (1.0 - np.cos(2 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi)))
    return gain * envelope * tone


def synth_mixture(count: int, max_count: int, total_len: int, sample_rate_hz: int,
                  rng: np.random.Generator, cfg: SyntheticSourceConfig):
    """Return ``(mixture samples, masks)`` for ``count`` gated synthetic sources."""
    harmonic_peak = sum(1.0 / k for k in range(1, cfg.n_harmonics + 1))
    # worst case: every source at full gain and in phase, plus the noise floor
    unit_gain = (cfg.peak - cfg.noise_level) / (max(max_count, 1) * harmonic_peak)
    mix = rng.uniform(-cfg.noise_level, cfg.noise_level, total_len)
    masks = []
    for _ in range(count):
        mask = random_activity_mask(total_len, rng, cfg)
        src = synth_source(total_len, sample_rate_hz, unit_gain * rng.uniform(*cfg.gain_jitter), rng, cfg)
        gate = np.zeros(total_len)
        for a, b in mask.intervals:
            gate[a:b] = 1.0
        mix += src * gate
        masks.append(mask)
    return mix, masks


def synth_generate(out_dir, n_mixtures: int, max_count: int, duration_s: float = 5.0, seed: int = 0,
                   min_count: int = 0, window: WindowConfig | None = None,
                   source_cfg: SyntheticSourceConfig | None = None) -> DatasetManifest:
    """Write class-balanced synthetic mixtures plus sidecars and ``manifest.json``."""
    window = window or WindowConfig()
    source_cfg = source_cfg or SyntheticSourceConfig()
    source_cfg.validate(window.sample_rate_hz)
    if n_mixtures < 1:
        raise ConfigurationError("nothing to generate: n_mixtures must be >= 1")
    if not 0 <= min_count <= max_count:
        raise ConfigurationError(f"invalid count range [{min_count}, {max_count}]")
    total_len = int(round(duration_s * window.sample_rate_hz))
    if total_len < window.length:
        raise ConfigurationError(f"duration {duration_s} s is shorter than one window")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    classes = list(range(min_count, max_count + 1))
    counts = [classes[i % len(classes)] for i in range(n_mixtures)]
    splits = assign_splits(counts, seed)
    records = []
    for i, count in enumerate(counts):
        rng = np.random.default_rng([seed, i])
        mix, masks = synth_mixture(count, max_count, total_len, window.sample_rate_hz, rng, source_cfg)
        name = f"mix_{i:05d}"
        write_wav(out / f"{name}.wav", Waveform(mix, window.sample_rate_hz))
        sources = [(f"s{j}", m) for j, m in enumerate(masks)]
        rec = MixtureRecord(f"{name}.wav", window.sample_rate_hz, total_len, max_count, count,
                            sources, splits[i])
        (out / f"{name}.json").write_text(json.dumps(
            {"sample_rate": window.sample_rate_hz, "duration_samples": total_len,
             "sources": [{"id": sid, "intervals": m.to_list()} for sid, m in sources]}))
        records.append(rec)
    manifest = DatasetManifest(records, window, max_count, "activity", out)
    manifest.save(out / "manifest.json")
    return manifest


# ------------------------------------------------------------------ ingestion

@dataclass
class IngestResult:
    manifest: DatasetManifest
    errors: list[tuple[str, str]]

    def summary(self) -> str:
        return f"{len(self.manifest.records)} files ingested, {len(self.errors)} errors"


_COUNT_RE = re.compile(r"^(\d+)_")


def ingest_wav_dir(directory, mode: str = "activity", max_count: int = 10,
                   window: WindowConfig | None = None, seed: int = 0) -> IngestResult:
    """Build a manifest from a directory of PCM16 mono WAVs.

    ``mode="activity"`` reads a JSON sidecar per WAV with per-source intervals.
    ``mode="count"`` takes the count from a sidecar ``"count"`` field, or from a
    leading ``<count>_`` in the filename. Per-file failures are collected and
    reported, not raised.
    """
    if mode not in ("activity", "count"):
        raise ConfigurationError(f"unknown annotation mode {mode!r}")
    window = window or WindowConfig()
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    wavs = sorted(p for p in root.iterdir() if p.suffix.lower() == ".wav")
    if not wavs:
        log.warning("no WAV files found in %s", root)
    records, errors = [], []
    for path in wavs:
        try:
            records.append(_ingest_one(path, mode, max_count, window))
        except (TacnetError, OSError, ValueError, KeyError) as exc:
            errors.append((path.name, f"{type(exc).__name__}: {exc}"))
            log.warning("skipping %s: %s", path.name, exc)
    splits = assign_splits([r.count for r in records], seed)
    for rec, sp in zip(records, splits):
        rec.split = sp
    manifest = DatasetManifest(records, window, max_count, mode, root)
    result = IngestResult(manifest, errors)
    log.info(result.summary())
    return result


def _ingest_one(path: Path, mode: str, max_count: int, window: WindowConfig) -> MixtureRecord:
    wav = read_wav(path, expected_rate=window.sample_rate_hz)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.is_file() else None
    if mode == "activity":
        if meta is None:
            raise ValidationError(f"missing annotation {sidecar.name}")
        if int(meta["sample_rate"]) != wav.sample_rate_hz:
            raise ValidationError(f"annotation sample rate {meta['sample_rate']} != audio {wav.sample_rate_hz}")
        if int(meta["duration_samples"]) != len(wav):
            raise ValidationError(f"annotation duration {meta['duration_samples']} != audio {len(wav)}")
        sources = [(str(s["id"]), ActivityMask(tuple(map(tuple, s["intervals"])))) for s in meta["sources"]]
        rec = MixtureRecord(path.name, wav.sample_rate_hz, len(wav), max_count, len(sources), sources)
    else:
        if meta is not None and "count" in meta:
            count = int(meta["count"])
        else:
            m = _COUNT_RE.match(path.name)
            if m is None:
                raise ValidationError("no count in sidecar or filename prefix")
            count = int(m.group(1))
        rec = MixtureRecord(path.name, wav.sample_rate_hz, len(wav), max_count, count)
    rec.validate()
    return rec


# ------------------------------------------------------------------ chunking

def record_chunks(manifest: DatasetManifest, record: MixtureRecord,
                  cfg: WindowConfig, audio: Waveform | None = None) -> list[LabeledChunk]:
    audio = audio if audio is not None else manifest.audio(record)
    if manifest.label_mode == "count":
        L = cfg.length
        return [LabeledChunk(audio.samples[k * L:(k + 1) * L].copy(), record.count)
                for k in range(len(audio) // L)]
    return segment_and_label(audio, record.masks, cfg)


def iter_chunks(manifest: DatasetManifest, cfg: WindowConfig | None = None,
                split: str | None = None) -> Iterator[tuple[int, str, LabeledChunk]]:
    """Yield ``(record index, split, chunk)`` in manifest order."""
    cfg = cfg or manifest.window
    for i, rec in enumerate(manifest.records):
        if split is not None and rec.split != split:
            continue
        for chunk in record_chunks(manifest, rec, cfg):
            yield i, rec.split, chunk


@dataclass
class ChunkedSplit:
    X: np.ndarray
    y: np.ndarray
    record: np.ndarray  # source record index per chunk

    def __len__(self) -> int:
        return len(self.y)

    def histogram(self, n_classes: int) -> list[int]:
        return np.bincount(self.y, minlength=n_classes).tolist()


def chunk_dataset(manifest: DatasetManifest, cfg: WindowConfig | None = None,
                  dtype=np.float32) -> dict[str, ChunkedSplit]:
    """Chunk every record; returns one :class:`ChunkedSplit` per split name."""
    cfg = cfg or manifest.window
    parts = {s: ([], [], []) for s in SPLITS}
    for i, sp, chunk in iter_chunks(manifest, cfg):
        xs, ys, rs = parts[sp]
        xs.append(chunk.samples)
        ys.append(chunk.label)
        rs.append(i)
    out = {}
    for sp, (xs, ys, rs) in parts.items():
        X = np.stack(xs).astype(dtype) if xs else np.zeros((0, cfg.length), dtype=dtype)
        out[sp] = ChunkedSplit(X, np.array(ys, dtype=np.int64), np.array(rs, dtype=np.int64))
    for sp, part in out.items():
        log.info("split %s: %d chunks, per class %s", sp, len(part), part.histogram(manifest.max_count + 1))
    return out


def balanced_sample(split: ChunkedSplit, n_classes: int, per_class: int,
                    rng: np.random.Generator) -> ChunkedSplit:
    """Draw ``per_class`` chunks of every label (with replacement only if a class is short)."""
    picks = []
    for c in range(n_classes):
        members = np.flatnonzero(split.y == c)
        if members.size == 0:
            raise ConfigurationError(f"no chunks with label {c}")
        picks.append(rng.choice(members, per_class, replace=members.size < per_class))
    idx = rng.permutation(np.concatenate(picks))
    return ChunkedSplit(split.X[idx], split.y[idx], split.record[idx])
