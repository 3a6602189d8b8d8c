import numpy as np
import pytest

from tacnet.classifier import CompactCnnConfig
from tacnet.datasets import chunk_dataset, synth_generate
from tacnet.model import TacNet
from tacnet.training import TrainConfig, train_loop

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def small_model(seed=0, n_classes=5, dtype=np.float64, **kw):
    kw.setdefault("n_filters", 8)
    kw.setdefault("kernel_width", 101)
    return TacNet.create(cnn=CompactCnnConfig(n_classes=n_classes), seed=seed, dtype=dtype, **kw)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """12 one-second mixtures, counts 0..2."""
    out = tmp_path_factory.mktemp("tiny")
    return synth_generate(out, 12, max_count=2, duration_s=1.0, seed=3)


@pytest.fixture(scope="session")
def trained_tiny(tiny_corpus):
    """A 3-class model trained briefly on the tiny corpus (float32, like production)."""
    parts = chunk_dataset(tiny_corpus)
    model = small_model(seed=1, n_classes=3, dtype=np.float32)
    best, _ = train_loop(model, (parts["train"].X, parts["train"].y),
                         (parts["val"].X, parts["val"].y), TrainConfig(epochs=8, seed=0))
    return best
