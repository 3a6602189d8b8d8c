"""Generate a small synthetic corpus, train a 3-class counter and evaluate it.

Run: python demos/02_synthetic_counting.py [workdir]
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from tacnet import (CompactCnnConfig, TacNet, TrainConfig, chunk_dataset, evaluate, load_checkpoint,
                    save_checkpoint, synth_generate, train_loop)

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="tacnet-demo-"))
manifest = synth_generate(work / "corpus", 30, max_count=2, duration_s=2.0, seed=0)
print(f"corpus in {work / 'corpus'}; mixtures per count: {manifest.class_histogram()}")

parts = chunk_dataset(manifest)
for name, part in parts.items():
    print(f"  {name:>5}: {len(part)} chunks, per class {part.histogram(3)}")

# a reduced frontend keeps the demo quick; the defaults are 40 filters of width 401
model = TacNet.create(cnn=CompactCnnConfig(n_classes=3), seed=0, n_filters=16, kernel_width=201)
best, history = train_loop(model, (parts["train"].X, parts["train"].y), (parts["val"].X, parts["val"].y),
                           TrainConfig(epochs=6, seed=0))
for rec in history:
    print(f"  epoch {rec['epoch']}: train loss {rec['train_loss']:.3f}, val acc {rec['val_accuracy']:.2f}")

ckpt = work / "model.tacnet"
save_checkpoint(best, ckpt)
restored = load_checkpoint(ckpt)
report = evaluate(restored, (parts["test"].X, parts["test"].y))
print("\ntest split:")
print(report.format())
x = parts["test"].X[:1]
print(f"\nposterior of the first test chunk: {np.round(restored.posterior(x)[0], 3)}")
