"""End-to-end counting model: frontend followed by the compact classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import classifier as clf
from . import frontend as fe
from .classifier import CompactCnnConfig
from .errors import ConfigurationError
from .frontend import FrontendParams
from .signal_core import WindowConfig


@dataclass
class TacNet:
    window: WindowConfig
    frontend: FrontendParams
    cnn: CompactCnnConfig
    classifier: dict[str, np.ndarray]

    @classmethod
    def create(cls, window: WindowConfig | None = None, cnn: CompactCnnConfig | None = None,
               seed: int = 0, dtype=np.float32, zero_output: bool = False,
               **frontend_kwargs) -> "TacNet":
        """Fresh model with a mel-initialized frontend and randomly initialized classifier.

        ``frontend_kwargs`` go to :func:`tacnet.frontend.init_mel`.
        """
        window = window or WindowConfig()
        cnn = cnn or CompactCnnConfig()
        frontend_kwargs.setdefault("sample_rate_hz", window.sample_rate_hz)
        frontend_kwargs.setdefault("f_max_hz", min(7800.0, 0.4875 * window.sample_rate_hz))
        frontend = fe.init_mel(dtype=dtype, **frontend_kwargs)
        rng = np.random.default_rng(seed)
        return cls(window, frontend, cnn, clf.init_classifier(cnn, rng, dtype, zero_output))

    @property
    def chunk_length(self) -> int:
        return self.window.length

    @property
    def feature_shape(self) -> tuple[int, int]:
        return self.frontend.n_filters, self.frontend.n_frames(self.chunk_length)

    @property
    def n_classes(self) -> int:
        return self.cnn.n_classes

    @property
    def dtype(self):
        return self.frontend.gabor.mu.dtype

    def parameters(self) -> dict[str, np.ndarray]:
        """Every learnable tensor by qualified name; arrays are shared, not copied."""
        named = {f"frontend.{k}": v for k, v in self.frontend.tensors().items()}
        named.update({f"classifier.{k}": v for k, v in self.classifier.items()})
        return named

    def load_parameters(self, named: dict[str, np.ndarray]) -> None:
        """Copy values into the existing tensors (in place)."""
        own = self.parameters()
        for name, arr in own.items():
            if name not in named:
                raise ConfigurationError(f"missing tensor {name}")
            src = np.asarray(named[name])
            if src.shape != arr.shape:
                raise ConfigurationError(f"{name}: expected shape {arr.shape}, got {src.shape}")
            arr[...] = src

    def copy(self, dtype=None) -> "TacNet":
        dtype = dtype or self.dtype
        return TacNet(self.window, self.frontend.astype(dtype), self.cnn,
                      {k: np.array(v, dtype=dtype) for k, v in self.classifier.items()})

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None]
        if x.shape[-1] != self.chunk_length:
            raise ConfigurationError(
                f"chunk length mismatch: expected {self.chunk_length}, got {x.shape[-1]}")
        return x

    def logits(self, x, return_cache: bool = False):
        x = self._check_input(x)
        feats, fcache = fe.forward_with_cache(x, self.frontend)
        logits, ccache = clf.forward_with_cache(feats, self.classifier, self.cnn)
        return (logits, (fcache, ccache)) if return_cache else logits

    def posterior(self, x) -> np.ndarray:
        return clf.softmax(self.logits(x))

    def predict(self, x) -> np.ndarray:
        return clf.predict(self.posterior(x))

    def backward(self, d_logits, cache) -> dict[str, np.ndarray]:
        fcache, ccache = cache
        cgrads, d_feats = clf.backward(d_logits, self.classifier, self.cnn, ccache)
        fgrads = fe.backward(d_feats, fcache)
        grads = {f"frontend.{k}": v for k, v in fgrads.items()}
        grads.update({f"classifier.{k}": v for k, v in cgrads.items()})
        return grads

    def clamp_(self) -> None:
        self.frontend.clamp_()
