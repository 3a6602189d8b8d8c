"""Compact CNN counting head over ``(N, M)`` feature maps.

Layers keep activations channels-last, ``(B, H, W, C)``, with H the filter
axis and W the frame axis. Convolutions are stride 1 with "same" padding; a
block whose stride exceeds one is followed by average pooling of that size
(ceil mode, so a width-1 axis never collapses to zero).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NumericError


@dataclass(frozen=True)
class CompactCnnConfig:
    conv_blocks: tuple[tuple[int, int, int], ...] = ((16, 3, 1), (32, 3, 2), (64, 3, 2))
    hidden_dim: int = 128
    n_classes: int = 11

    def __post_init__(self):
        blocks = tuple((int(c), int(k), int(s)) for c, k, s in self.conv_blocks)
        object.__setattr__(self, "conv_blocks", blocks)
        if self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be >= 2, got {self.n_classes}")
        for c, k, s in blocks:
            if c < 1 or k < 1 or k % 2 == 0 or s < 1:
                raise ConfigurationError(f"invalid conv block {(c, k, s)}: need odd kernel, positive sizes")
        if self.hidden_dim < 1:
            raise ConfigurationError("hidden_dim must be positive")

    @property
    def max_count(self) -> int:
        return self.n_classes - 1

    def to_dict(self) -> dict:
        return {"conv_blocks": [list(b) for b in self.conv_blocks],
                "hidden_dim": self.hidden_dim, "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d: dict) -> "CompactCnnConfig":
        return cls(conv_blocks=tuple(tuple(b) for b in d["conv_blocks"]),
                   hidden_dim=int(d["hidden_dim"]), n_classes=int(d["n_classes"]))


def init_classifier(cfg: CompactCnnConfig, rng: np.random.Generator,
                    dtype=np.float32, zero_output: bool = False) -> dict[str, np.ndarray]:
    params = {}
    c_in = 1
    for i, (c_out, k, _) in enumerate(cfg.conv_blocks):
        fan_in = c_in * k * k
        params[f"conv{i}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, k, k))
        params[f"conv{i}.b"] = np.zeros(c_out)
        c_in = c_out
    params["hidden.w"] = rng.normal(0.0, np.sqrt(2.0 / c_in), (c_in, cfg.hidden_dim))
    params["hidden.b"] = np.zeros(cfg.hidden_dim)
    if zero_output:
        params["out.w"] = np.zeros((cfg.hidden_dim, cfg.n_classes))
    else:
        params["out.w"] = rng.normal(0.0, np.sqrt(1.0 / cfg.hidden_dim), (cfg.hidden_dim, cfg.n_classes))
    params["out.b"] = np.zeros(cfg.n_classes)
    return {k: v.astype(dtype) for k, v in params.items()}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(probs) -> np.ndarray | int:
    """Argmax over classes; ``np.argmax`` already breaks ties toward the smaller index."""
    probs = np.asarray(probs)
    out = np.argmax(probs, axis=-1)
    return int(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ layers

def _conv_forward(x, w, b):
    B, H, W, C = x.shape
    c_out, _, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = sliding_window_view(xp, (k, k), axis=(1, 2)).reshape(B * H * W, C * k * k)
    out = cols @ w.reshape(c_out, -1).T + b
    return out.reshape(B, H, W, c_out), (cols, x.shape, k)


def _conv_backward(g, w, cache):
    cols, (B, H, W, C), k = cache
    c_out = w.shape[0]
    g2 = g.reshape(-1, c_out)
    dw = (g2.T @ cols).reshape(w.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ w.reshape(c_out, -1)).reshape(B, H, W, C, k, k)
    pad = k // 2
    dxp = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=g.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + H, j:j + W, :] += dcols[..., i, j]
    return dxp[:, pad:pad + H, pad:pad + W, :], dw, db


def _pool_counts(H, W, p, dtype):
    Ho, Wo = -(-H // p), -(-W // p)
    valid = np.zeros((Ho * p, Wo * p), dtype=dtype)
    valid[:H, :W] = 1
    counts = valid.reshape(Ho, p, Wo, p).sum(axis=(1, 3))
    return Ho, Wo, counts


def _avgpool_forward(x, p):
    B, H, W, C = x.shape
    Ho, Wo, counts = _pool_counts(H, W, p, x.dtype)
    xp = np.zeros((B, Ho * p, Wo * p, C), dtype=x.dtype)
    xp[:, :H, :W] = x
    out = xp.reshape(B, Ho, p, Wo, p, C).sum(axis=(2, 4)) / counts[None, :, :, None]
    return out, (x.shape, p, counts)


def _avgpool_backward(g, cache):
    (B, H, W, C), p, counts = cache
    g = g / counts[None, :, :, None]
    up = np.repeat(np.repeat(g, p, axis=1), p, axis=2)
    return up[:, :H, :W]


def forward_with_cache(features, params, cfg: CompactCnnConfig):
    """Logits for a batch of feature maps ``(B, N, M)``."""
    x = features[..., None]
    caches = []
    for i, (_, _, stride) in enumerate(cfg.conv_blocks):
        x, conv_cache = _conv_forward(x, params[f"conv{i}.w"], params[f"conv{i}.b"])
        relu_mask = x > 0
        x = x * relu_mask
        pool_cache = None
        if stride > 1:
            x, pool_cache = _avgpool_forward(x, stride)
        caches.append((conv_cache, relu_mask, pool_cache))
    spatial = x.shape[1] * x.shape[2]
    pooled = x.mean(axis=(1, 2))
    hidden_pre = pooled @ params["hidden.w"] + params["hidden.b"]
    hidden_mask = hidden_pre > 0
    hidden = hidden_pre * hidden_mask
    logits = hidden @ params["out.w"] + params["out.b"]
    cache = (caches, x.shape, spatial, pooled, hidden_mask, hidden)
    return logits, cache


def backward(d_logits, params, cfg: CompactCnnConfig, cache):
    """Return ``(parameter gradients, dC/d(features))`` given ``dC/d(logits)``."""
    caches, x_shape, spatial, pooled, hidden_mask, hidden = cache
    grads = {}
    grads["out.w"] = hidden.T @ d_logits
    grads["out.b"] = d_logits.sum(axis=0)
    d_hidden = (d_logits @ params["out.w"].T) * hidden_mask
    grads["hidden.w"] = pooled.T @ d_hidden
    grads["hidden.b"] = d_hidden.sum(axis=0)
    d_pooled = d_hidden @ params["hidden.w"].T
    dx = np.broadcast_to(d_pooled[:, None, None, :] / spatial, x_shape).copy()
    for i in range(len(cfg.conv_blocks) - 1, -1, -1):
        conv_cache, relu_mask, pool_cache = caches[i]
        if pool_cache is not None:
            dx = _avgpool_backward(dx, pool_cache)
        dx = dx * relu_mask
        dx, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = _conv_backward(dx, params[f"conv{i}.w"], conv_cache)
    return grads, dx[..., 0]


def relu_signature(cache) -> bytes:
    """Packed on/off pattern of every rectifier; changes when an input crosses a kink."""
    caches, _, _, _, hidden_mask, _ = cache
    masks = [c[1].ravel() for c in caches] + [hidden_mask.ravel()]
    return np.packbits(np.concatenate(masks)).tobytes()


def _check_shape(features, expected):
    if expected is not None and tuple(features.shape[-2:]) != tuple(expected):
        raise ConfigurationError(
            f"feature map shape mismatch: expected {tuple(expected)}, got {tuple(features.shape[-2:])}")


def classifier_forward(features, params, cfg: CompactCnnConfig, input_shape=None) -> np.ndarray:
    """Posterior over ``cfg.n_classes`` counts for one map ``(N, M)`` or a batch."""
    features = np.asarray(features)
    _check_shape(features, input_shape)
    single = features.ndim == 2
    logits, _ = forward_with_cache(features[None] if single else features, params, cfg)
    probs = softmax(logits)
    return probs[0] if single else probs


def classifier_gradients(features, params, cfg: CompactCnnConfig, upstream, input_shape=None):
    """Gradients given ``upstream = dC/d(logits)``; returns ``(param grads, dC/d(features))``."""
    features = np.asarray(features)
    _check_shape(features, input_shape)
    upstream = np.asarray(upstream, dtype=features.dtype)
    if not (np.all(np.isfinite(upstream)) and np.all(np.isfinite(features))):
        raise NumericError("non-finite values passed to classifier_gradients")
    single = features.ndim == 2
    fb = features[None] if single else features
    ub = upstream[None] if single else upstream
    _, cache = forward_with_cache(fb, params, cfg)
    grads, d_features = backward(ub, params, cfg, cache)
    return grads, (d_features[0] if single else d_features)
