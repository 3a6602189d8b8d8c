"""``tacnet`` command-line entry point.

Subcommands: synth, ingest, train, eval, sweep, gradcheck, count. Failures
print a single ``error: <kind>: <message>`` line to stderr and exit nonzero.
Log verbosity comes from ``TACNET_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import DatasetManifest, balanced_sample, chunk_dataset, ingest_wav_dir, synth_generate
from .errors import ConfigurationError, TacnetError
from .evaluation import (SWEEP_SIZES_MS, REFERENCE_BEST_WINDOW_MS, evaluate, mae_window_sweep,
                         parse_sizes, sweep_series, sweep_to_csv)
from .model import TacNet
from .signal_core import WindowConfig, make_windows
from .training import TrainConfig, grad_check, train_loop
from .wavio import read_wav
from .classifier import CompactCnnConfig
from .config import RunConfig

log = logging.getLogger("tacnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {self.prog}: {message}\n")


def cmd_synth(args) -> int:
    manifest = synth_generate(args.out, args.n, args.max_count, args.duration_s, args.seed,
                              min_count=args.min_count,
                              window=WindowConfig(args.window_ms, args.sample_rate))
    print(Path(args.out) / "manifest.json")
    print(json.dumps({"class_histogram": manifest.class_histogram()}))
    return 0


def cmd_ingest(args) -> int:
    result = ingest_wav_dir(args.dir, args.mode, args.max_count,
                            WindowConfig(args.window_ms, args.sample_rate), args.seed)
    out = result.manifest.save(Path(args.dir) / "manifest.json" if args.out is None else args.out)
    print(out)
    print(result.summary())
    for name, msg in result.errors:
        print(f"  {name}: {msg}")
    return 0


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg.override("train", epochs=args.epochs, batch_size=args.batch_size,
                 learning_rate=args.lr, seed=args.seed, patience=args.patience)
    cfg.override("window", window_ms=args.window_ms)
    cfg.override("data", manifest=args.manifest, balanced_per_class=args.balanced_per_class)
    return cfg


def _build_model(cfg: RunConfig, manifest: DatasetManifest, seed: int) -> TacNet:
    window = WindowConfig(**{**manifest.window.to_dict(), **cfg.window})
    return TacNet.create(window, cfg.cnn_config(manifest.max_count + 1), seed=seed, **cfg.frontend)


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if "manifest" not in cfg.data:
        raise ConfigurationError("no manifest given (--manifest or data.manifest)")
    manifest = DatasetManifest.load(cfg.data["manifest"])
    train_cfg = cfg.train_config()
    model = _build_model(cfg, manifest, train_cfg.seed)
    parts = chunk_dataset(manifest, model.window)
    train, val = parts["train"], parts["val"]
    if len(train) == 0 or len(val) == 0:
        raise ConfigurationError("manifest needs non-empty train and val splits")
    per_class = cfg.data.get("balanced_per_class")
    if per_class:
        rng = np.random.default_rng(train_cfg.seed)
        train = balanced_sample(train, model.n_classes, int(per_class), rng)
    best, history = train_loop(model, (train.X, train.y), (val.X, val.y), train_cfg,
                               history_path=args.history)
    save_checkpoint(best, args.out)
    for rec in history:
        print(json.dumps(rec))
    print(f"checkpoint: {args.out}")
    return 0


def cmd_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    model = load_checkpoint(args.ckpt)
    if model.cnn.max_count != manifest.max_count:
        raise ConfigurationError(
            f"max count mismatch: checkpoint {model.cnn.max_count} vs manifest {manifest.max_count}")
    part = chunk_dataset(manifest, model.window)[args.split]
    report = evaluate(model, (part.X, part.y))
    if args.report:
        Path(args.report).write_text(report.to_json())
    if args.confusion_csv:
        Path(args.confusion_csv).write_text(report.confusion.to_csv())
    print(report.format())
    return 0


def cmd_sweep(args) -> int:
    sizes = parse_sizes(args.sizes)
    manifest = DatasetManifest.load(args.manifest)
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg.override("train", seed=args.seed)
    train_cfg = TrainConfig(**{"epochs": 10 ** 6, **cfg.train})
    rows = mae_window_sweep(manifest, sizes, args.budget_steps, train_cfg, cfg.frontend or None,
                            per_class=cfg.data.get("balanced_per_class"), seed=train_cfg.seed)
    text = sweep_to_csv(rows)
    Path(args.out).write_text(text)
    if args.series:
        Path(args.series).write_text(json.dumps(sweep_series(rows)))
    sys.stdout.write(text)
    print(f"# reference expectation (not asserted): minimum MAE at {REFERENCE_BEST_WINDOW_MS} ms")
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"# {r.window_ms:g} ms failed: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_gradcheck(args) -> int:
    model = TacNet.create(cnn=CompactCnnConfig(n_classes=args.n_classes), seed=args.seed,
                          dtype=np.float64, n_filters=8, kernel_width=101)
    rng = np.random.default_rng(args.seed)
    chunk = 0.3 * rng.standard_normal(model.chunk_length)
    label = int(rng.integers(model.n_classes))
    report = grad_check(model, chunk, label, tolerance=args.tolerance, full=args.full,
                        seed=args.seed, corrupt=args.corrupt_tensor)
    print(report.table())
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _lower_median(values) -> int:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def cmd_count(args) -> int:
    model = load_checkpoint(args.ckpt)
    wav = read_wav(args.wav)
    if wav.sample_rate_hz != model.window.sample_rate_hz:
        raise ConfigurationError(
            f"sample rate mismatch: wav {wav.sample_rate_hz} Hz vs checkpoint {model.window.sample_rate_hz} Hz")
    if args.smooth < 1:
        raise ConfigurationError("--smooth must be >= 1")
    recent: list[int] = []
    out = sys.stdout
    t0 = time.perf_counter()
    for a, b in make_windows(len(wav), model.window):
        pred = int(model.predict(wav.samples[a:b])[0])
        recent = (recent + [pred])[-args.smooth:]
        out.write(f"{1000.0 * a / wav.sample_rate_hz:.3f},{_lower_median(recent)}\n")
    elapsed = time.perf_counter() - t0
    factor = wav.duration_s / elapsed if elapsed > 0 else float("inf")
    print(f"# throughput: {factor:.2f}x real time", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tacnet", description="Audio source counting from raw waveforms.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic mixture corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--max-count", type=int, default=10)
    s.add_argument("--min-count", type=int, default=0)
    s.add_argument("--duration-s", type=float, default=5.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--window-ms", type=float, default=25.0)
    s.add_argument("--sample-rate", type=int, default=16000)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="build a manifest from a directory of WAV files")
    s.add_argument("--dir", required=True)
    s.add_argument("--mode", choices=("activity", "count"), default="activity")
    s.add_argument("--max-count", type=int, default=10)
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--window-ms", type=float, default=25.0)
    s.add_argument("--sample-rate", type=int, default=16000)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train a model end to end")
    s.add_argument("--manifest")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--history", help="append per-epoch JSON lines here")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--window-ms", type=float)
    s.add_argument("--balanced-per-class", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--split", choices=("train", "val", "test"), default="test")
    s.add_argument("--report")
    s.add_argument("--confusion-csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="MAE as a function of window size")
    s.add_argument("--manifest", required=True)
    s.add_argument("--sizes", default=",".join(str(v) for v in SWEEP_SIZES_MS))
    s.add_argument("--budget-steps", type=int, default=200)
    s.add_argument("--out", required=True, help="CSV path (header window_ms,mae)")
    s.add_argument("--series", help="optional JSON plot series")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--full", action="store_true", help="check every scalar (slow)")
    s.add_argument("--tolerance", type=float, default=1e-5)
    s.add_argument("--n-classes", type=int, default=11)
    s.add_argument("--corrupt-tensor", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("count", help="stream a WAV file chunk by chunk")
    s.add_argument("--wav", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--smooth", type=int, default=1, help="running median over the last K chunks")
    s.set_defaults(func=cmd_count)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TACNET_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TacnetError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: file-not-found: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
