"""Loss, Adam, training loop and the finite-difference gradient checker."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import frontend as fe
from .classifier import relu_signature, softmax
from .errors import ConfigurationError, NumericError, ValidationError
from .model import TacNet

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def cross_entropy_loss(probs, label: int) -> float:
    """``-log p[label]`` with the probability floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= int(label) < probs.shape[-1]:
        raise ValidationError(f"label {label} outside [0, {probs.shape[-1] - 1}]")
    return float(-np.log(max(probs[int(label)], PROB_FLOOR)))


def as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """Accept ``(X, y)`` or a sequence of :class:`LabeledChunk`."""
    if isinstance(data, tuple) and len(data) == 2:
        X, y = data
        return np.asarray(X), np.asarray(y, dtype=np.int64)
    chunks = list(data)
    if not chunks:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    lengths = {c.samples.shape[0] for c in chunks}
    if len(lengths) != 1:
        raise ValidationError(f"chunks have mixed lengths {sorted(lengths)}")
    return np.stack([c.samples for c in chunks]), np.array([c.label for c in chunks], dtype=np.int64)


def loss_and_grads(model: TacNet, X, y):
    """Mean cross-entropy over the batch, posteriors and gradients of every tensor."""
    logits, cache = model.logits(X, return_cache=True)
    probs = softmax(logits)
    B = probs.shape[0]
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValidationError(f"labels must lie in [0, {model.n_classes - 1}]")
    picked = probs[np.arange(B), y].astype(np.float64)
    loss = float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss: {_diagnose(model, X)}")
    d_logits = probs.copy()
    d_logits[np.arange(B), y] -= 1.0
    d_logits /= B
    grads = model.backward(d_logits.astype(probs.dtype), cache)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return loss, probs, grads


def _diagnose(model: TacNet, X) -> str:
    for name, p in model.parameters().items():
        if not np.all(np.isfinite(p)):
            return f"parameter {name} is non-finite"
    if not np.all(np.isfinite(X)):
        return "input chunk is non-finite"
    feats = fe.frontend_forward(np.asarray(X, dtype=model.dtype), model.frontend)
    if not np.all(np.isfinite(feats)):
        return "frontend output is non-finite"
    return "classifier output is non-finite"


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr >= 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {lr}")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            m = self.m.setdefault(name, np.zeros(p.shape))
            v = self.v.setdefault(name, np.zeros(p.shape))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p -= update.astype(p.dtype)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")

    def make_optimizer(self) -> Adam:
        return Adam(self.learning_rate, self.beta1, self.beta2, self.adam_eps)


@dataclass
class TrainState:
    model: TacNet
    optimizer: Adam
    step: int = 0


def train_step(batch, state: TrainState):
    """One minibatch update; returns ``(state, mean loss, accuracy)``."""
    X, y = as_arrays(batch)
    if X.shape[0] == 0:
        raise ConfigurationError("empty batch")
    loss, probs, grads = loss_and_grads(state.model, X, y)
    state.optimizer.step(state.model.parameters(), grads)
    state.model.clamp_()
    state.step += 1
    acc = float(np.mean(np.argmax(probs, axis=1) == y))
    return state, loss, acc


def evaluate_loss(model: TacNet, X, y, batch_size: int = 256) -> tuple[float, float]:
    """Mean loss and accuracy without updating anything."""
    total, correct = 0.0, 0
    for i in range(0, len(y), batch_size):
        probs = model.posterior(X[i:i + batch_size])
        yb = y[i:i + batch_size]
        total += float(np.sum(-np.log(np.maximum(probs[np.arange(len(yb)), yb].astype(np.float64), PROB_FLOOR))))
        correct += int(np.sum(np.argmax(probs, axis=1) == yb))
    return total / len(y), correct / len(y)


def train_loop(model: TacNet, train, val, cfg: TrainConfig, history_path=None, max_steps: int | None = None):
    """Shuffled minibatch training with best-on-validation retention.

    Returns ``(best model, history)``; each history record is a dict with
    ``epoch, train_loss, val_loss, val_accuracy, wall_seconds``. When
    ``history_path`` is given the records are also appended there, one JSON
    object per line.
    """
    Xtr, ytr = as_arrays(train)
    Xva, yva = as_arrays(val)
    if len(ytr) == 0 or len(yva) == 0:
        raise ConfigurationError("train and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    state = TrainState(model, cfg.make_optimizer())
    best, best_acc, stale = model.copy(), -1.0, 0
    history = []
    t0 = time.perf_counter()
    sink = open(history_path, "a") if history_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(ytr))
            losses = []
            for i in range(0, len(order), cfg.batch_size):
                idx = order[i:i + cfg.batch_size]
                state, loss, _ = train_step((Xtr[idx], ytr[idx]), state)
                losses.append(loss)
                if max_steps is not None and state.step >= max_steps:
                    break
            val_loss, val_acc = evaluate_loss(model, Xva, yva)
            record = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss,
                      "val_accuracy": val_acc, "wall_seconds": time.perf_counter() - t0}
            history.append(record)
            log.info("epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.3f",
                     epoch, record["train_loss"], val_loss, val_acc)
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            if val_acc > best_acc:
                best, best_acc, stale = model.copy(), val_acc, 0
            else:
                stale += 1
                if cfg.patience is not None and stale > cfg.patience:
                    break
            if max_steps is not None and state.step >= max_steps:
                break
    finally:
        if sink:
            sink.close()
    return best, history


# ------------------------------------------------------------ gradient check

@dataclass
class TensorCheck:
    name: str
    n_checked: int
    n_kinks: int
    max_rel_error: float
    status: str  # "pass" | "fail" | "degenerate, skipped"


@dataclass
class GradCheckReport:
    tolerance: float
    tensors: list[TensorCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.status != "fail" for t in self.tensors)

    def table(self) -> str:
        lines = [f"{'tensor':<24} {'checked':>7} {'kinks':>5} {'max_rel_err':>12}  status"]
        for t in self.tensors:
            lines.append(f"{t.name:<24} {t.n_checked:>7} {t.n_kinks:>5} {t.max_rel_error:>12.3e}  {t.status}")
        return "\n".join(lines)


def grad_check(model: TacNet, chunk, label: int, tolerance: float = 1e-5, step: float = 1e-4,
               per_tensor: int = 64, full: bool = False, seed: int = 0,
               corrupt: str | None = None) -> GradCheckReport:
    """Compare analytic gradients of the loss with central differences, in float64.

    The perturbation for scalar ``p`` is ``step * max(|p|, 0.01)``. Scalars whose
    two perturbed evaluations flip any rectifier are counted as kinks and
    excluded. ``corrupt`` names a tensor whose analytic gradient is deliberately
    damaged, to exercise the failure path.
    """
    m = model.copy(np.float64)
    x = np.asarray(chunk, dtype=np.float64)[None]
    y = np.array([int(label)])
    _, _, grads = loss_and_grads(m, x, y)
    if corrupt is not None:
        if corrupt not in grads:
            raise ConfigurationError(f"unknown tensor {corrupt}")
        grads[corrupt] = grads[corrupt] * 1.01 + 1e-3 * np.max(np.abs(grads[corrupt]) + 1.0)

    def loss_and_signature():
        logits, cache = m.logits(x, return_cache=True)
        p = softmax(logits)[0]
        return -np.log(max(p[y[0]], PROB_FLOOR)), relu_signature(cache[1])

    _, base_sig = loss_and_signature()
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for name, p in m.parameters().items():
        flat = p.reshape(-1)
        if full or flat.size <= per_tensor:
            picks = np.arange(flat.size)
        else:
            picks = rng.choice(flat.size, per_tensor, replace=False)
        analytic, numeric, kinks = [], [], 0
        g = grads[name].reshape(-1)
        for i in picks:
            orig = flat[i]
            h = step * max(abs(orig), 1e-2)
            flat[i] = orig + h
            f_plus, sig_plus = loss_and_signature()
            flat[i] = orig - h
            f_minus, sig_minus = loss_and_signature()
            flat[i] = orig
            if sig_plus != base_sig or sig_minus != base_sig:
                kinks += 1
                continue
            analytic.append(g[i])
            numeric.append((f_plus - f_minus) / (2.0 * h))
        a, n = np.array(analytic), np.array(numeric)
        scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0))
        if a.size == 0 or scale < 1e-10:
            report.tensors.append(TensorCheck(name, int(a.size), kinks, 0.0, "degenerate, skipped"))
            continue
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3 * scale)
        err = float(np.max(np.abs(a - n) / denom))
        report.tensors.append(TensorCheck(name, int(a.size), kinks, err,
                                          "pass" if err < tolerance else "fail"))
    return report
