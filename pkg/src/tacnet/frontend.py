"""Learnable time-frequency frontend: Gabor filtering, Gaussian pooling, PCEN.

Each stage has a forward pass that records what its backward pass needs, so
parameter gradients are exact (derived by hand, checked against finite
differences in the test suite). All stages accept a single chunk ``(L,)`` or a
batch ``(B, L)``; batched outputs carry the batch axis first.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, NumericError, ParameterError

SQRT_2PI = np.sqrt(2.0 * np.pi)

# clamp bounds applied after every optimizer step
MU_MIN, MU_MAX = 1e-4, 0.5 - 1e-4
SIGMA_FLOOR = 0.5
R_MIN, R_MAX = 0.05, 1.0
DELTA_FLOOR = 1e-3


def _flush_subnormal(a: np.ndarray, dtype) -> np.ndarray:
    """Cast to ``dtype`` and zero entries below its smallest normal number.

    Subnormal kernel taps (far Gaussian tails) slow BLAS down by an order of magnitude.
    """
    out = np.ascontiguousarray(a, dtype=dtype)
    out[np.abs(out) < np.finfo(dtype).tiny] = 0
    return out


def _taps(width: int) -> np.ndarray:
    if width < 1 or width % 2 == 0:
        raise ParameterError(f"kernel width must be a positive odd integer, got {width}")
    half = (width - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


@dataclass
class GaborFilterParams:
    mu: np.ndarray       # center frequencies, cycles/sample
    sigma_t: np.ndarray  # envelope widths, samples


@dataclass
class PoolingParams:
    sigma_p: np.ndarray
    stride: int = 160
    kernel_width: int = 161


@dataclass
class PcenParams:
    alpha: np.ndarray
    delta: np.ndarray
    r: np.ndarray
    s: float = 0.04
    eps: float = 1e-6


@dataclass
class FrontendParams:
    gabor: GaborFilterParams
    pooling: PoolingParams
    pcen: PcenParams
    kernel_width: int = 401

    @property
    def n_filters(self) -> int:
        return int(np.asarray(self.gabor.mu).shape[0])

    def n_frames(self, chunk_len: int) -> int:
        return -(-chunk_len // self.pooling.stride)

    def tensors(self) -> dict[str, np.ndarray]:
        """The learnable arrays, keyed by short name (shared references)."""
        return {
            "mu": self.gabor.mu,
            "sigma_t": self.gabor.sigma_t,
            "sigma_p": self.pooling.sigma_p,
            "alpha": self.pcen.alpha,
            "delta": self.pcen.delta,
            "r": self.pcen.r,
        }

    def with_tensors(self, t: dict[str, np.ndarray]) -> "FrontendParams":
        return FrontendParams(
            gabor=GaborFilterParams(t["mu"], t["sigma_t"]),
            pooling=replace(self.pooling, sigma_p=t["sigma_p"]),
            pcen=replace(self.pcen, alpha=t["alpha"], delta=t["delta"], r=t["r"]),
            kernel_width=self.kernel_width,
        )

    def astype(self, dtype) -> "FrontendParams":
        return self.with_tensors({k: np.array(v, dtype=dtype) for k, v in self.tensors().items()})

    def config(self) -> dict:
        """Non-learnable settings (what a checkpoint header records)."""
        return {
            "n_filters": self.n_filters,
            "kernel_width": int(self.kernel_width),
            "pool_width": int(self.pooling.kernel_width),
            "stride": int(self.pooling.stride),
            "s": float(self.pcen.s),
            "eps": float(self.pcen.eps),
        }

    def clamp_(self) -> None:
        """Project parameters back into their valid ranges, in place."""
        np.clip(self.gabor.mu, MU_MIN, MU_MAX, out=self.gabor.mu)
        np.maximum(self.gabor.sigma_t, SIGMA_FLOOR, out=self.gabor.sigma_t)
        np.maximum(self.pooling.sigma_p, SIGMA_FLOOR, out=self.pooling.sigma_p)
        np.maximum(self.pcen.alpha, 0.0, out=self.pcen.alpha)
        np.maximum(self.pcen.delta, DELTA_FLOOR, out=self.pcen.delta)
        np.clip(self.pcen.r, R_MIN, R_MAX, out=self.pcen.r)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def init_mel(n_filters: int = 40, sample_rate_hz: int = 16000, f_min_hz: float = 60.0,
             f_max_hz: float = 7800.0, kernel_width: int = 401, *, sigma_p: float = 40.0,
             stride: int = 160, pool_width: int = 161, alpha: float = 0.96,
             delta: float = 2.0, r: float = 0.5, s: float = 0.04, eps: float = 1e-6,
             dtype=np.float32) -> FrontendParams:
    """Mel-spaced Gabor bank.

    Centers are the N interior points of an (N + 2)-point grid equally spaced
    in mel between ``f_min_hz`` and ``f_max_hz``. Each filter's frequency-domain
    FWHM equals half the distance between its two grid neighbours.
    """
    if n_filters < 2:
        raise ParameterError(f"need at least 2 filters, got {n_filters}")
    if not 0 <= f_min_hz < f_max_hz <= sample_rate_hz / 2:
        raise ParameterError(
            f"band edges must satisfy 0 <= f_min < f_max <= fs/2, got "
            f"({f_min_hz}, {f_max_hz}) at fs={sample_rate_hz}")
    _taps(kernel_width)
    _taps(pool_width)
    grid_hz = mel_to_hz(np.linspace(hz_to_mel(f_min_hz), hz_to_mel(f_max_hz), n_filters + 2))
    centers = grid_hz[1:-1] / sample_rate_hz
    fwhm = (grid_hz[2:] - grid_hz[:-2]) / 2.0 / sample_rate_hz
    # Gabor frequency response is Gaussian with std 1/(2 pi sigma_t)
    sigma_t = np.sqrt(2.0 * np.log(2.0)) / (np.pi * fwhm)
    full = lambda v: np.full(n_filters, v, dtype=dtype)
    params = FrontendParams(
        gabor=GaborFilterParams(centers.astype(dtype), sigma_t.astype(dtype)),
        pooling=PoolingParams(full(sigma_p), stride=int(stride), kernel_width=int(pool_width)),
        pcen=PcenParams(full(alpha), full(delta), full(r), s=float(s), eps=float(eps)),
        kernel_width=int(kernel_width),
    )
    params.clamp_()
    return params


def gabor_kernel(mu: float, sigma: float, width: int) -> np.ndarray:
    """Complex Gabor kernel sampled on ``n = -(W-1)/2 .. (W-1)/2``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    n = _taps(width)
    envelope = np.exp(-n ** 2 / (2.0 * sigma ** 2)) / (SQRT_2PI * sigma)
    return envelope * np.exp(2j * np.pi * mu * n)


def gaussian_kernel(sigma: float, width: int, normalize: bool = False) -> np.ndarray:
    """Gaussian pooling kernel; ``normalize`` rescales the sampled taps to unit sum."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    n = _taps(width)
    g = np.exp(-n ** 2 / (2.0 * sigma ** 2)) / (SQRT_2PI * sigma)
    return g / g.sum() if normalize else g


# ---------------------------------------------------------------- filtering

def _gabor_bank(mu, sigma, width):
    n = _taps(width)
    mu = np.asarray(mu, dtype=np.float64)[:, None]
    sigma = np.asarray(sigma, dtype=np.float64)[:, None]
    env = np.exp(-n ** 2 / (2.0 * sigma ** 2)) / (SQRT_2PI * sigma)
    phase = 2.0 * np.pi * mu * n
    return n, env, np.cos(phase), np.sin(phase)


def _filter_forward(x, gabor: GaborFilterParams, width: int):
    n_taps, env, cos, sin = _gabor_bank(gabor.mu, gabor.sigma_t, width)
    dtype = x.dtype
    B, L = x.shape
    half = (width - 1) // 2
    xp = np.pad(x, ((0, 0), (half, half)))
    # row t of `frames` is xp[t : t + W]; correlating with the flipped kernel is convolution
    frames = np.ascontiguousarray(sliding_window_view(xp, width, axis=1).reshape(B * L, width))
    kmat = np.concatenate([(env * cos)[:, ::-1], (env * sin)[:, ::-1]], axis=0).T
    out = frames @ _flush_subnormal(kmat, dtype)
    N = env.shape[0]
    re, im = out[:, :N], out[:, N:]
    y1 = (re * re + im * im).reshape(B, L, N).transpose(0, 2, 1)
    sigma = np.asarray(gabor.sigma_t, dtype=np.float64)[:, None]
    cache = (frames, re, im, n_taps, env, cos, sin, sigma, B, L)
    return np.ascontiguousarray(y1), cache


def _filter_backward(g1, cache):
    frames, re, im, n, env, cos, sin, sigma, B, L = cache
    N = env.shape[0]
    g = g1.transpose(0, 2, 1).reshape(B * L, N)
    d_out = np.concatenate([2.0 * re * g, 2.0 * im * g], axis=1)
    dk = (frames.T @ d_out).astype(np.float64)
    d_re = dk[::-1, :N].T
    d_im = dk[::-1, N:].T
    two_pi_n = 2.0 * np.pi * n
    d_mu = np.sum(two_pi_n * env * (d_im * cos - d_re * sin), axis=1)
    d_env = d_re * cos + d_im * sin
    d_sigma = np.sum(d_env * env * (n ** 2 / sigma ** 3 - 1.0 / sigma), axis=1)
    return d_mu, d_sigma


# ---------------------------------------------------------------- pooling

def _pool_index(L, stride, width):
    M = -(-L // stride)
    return np.arange(M)[:, None] * stride + np.arange(width)[None, :], M


def _pool_kernels(sigma_p, width):
    n = _taps(width)
    sigma = np.asarray(sigma_p, dtype=np.float64)[:, None]
    e = np.exp(-n ** 2 / (2.0 * sigma ** 2))
    return n, sigma, e / e.sum(axis=1, keepdims=True)


def _pool_forward(y1, pooling: PoolingParams):
    B, N, L = y1.shape
    width = pooling.kernel_width
    half = (width - 1) // 2
    n, sigma, gamma = _pool_kernels(pooling.sigma_p, width)
    idx, M = _pool_index(L, pooling.stride, width)
    y1p = np.pad(y1, ((0, 0), (0, 0), (half, half)))
    gathered = y1p[:, :, idx]  # (B, N, M, W)
    y2 = np.einsum("bnmw,nw->bnm", gathered, _flush_subnormal(gamma, y1.dtype))
    return y2, (gathered, idx, n, sigma, gamma, y1p.shape, half)


def _pool_backward(g2, cache):
    gathered, idx, n, sigma, gamma, padded_shape, half = cache
    d_gamma = np.einsum("bnm,bnmw->nw", g2, gathered).astype(np.float64)
    q = n ** 2 / sigma ** 3
    d_sigma = np.sum(d_gamma * gamma * (q - np.sum(gamma * q, axis=1, keepdims=True)), axis=1)
    d_y1p = np.zeros(padded_shape, dtype=g2.dtype)
    g_cast = _flush_subnormal(gamma, g2.dtype)
    for m in range(idx.shape[0]):
        d_y1p[:, :, idx[m]] += g2[:, :, m, None] * g_cast[None]
    return d_y1p[:, :, half:padded_shape[2] - half], d_sigma


# ---------------------------------------------------------------- compression

def _pcen_forward(y2, pcen: PcenParams):
    if np.any(y2 < 0):
        raise DomainError("PCEN input must be elementwise nonnegative")
    B, N, M = y2.shape
    s = pcen.s
    smooth = np.empty_like(y2)
    smooth[..., 0] = y2[..., 0]
    for m in range(1, M):
        smooth[..., m] = (1.0 - s) * smooth[..., m - 1] + s * y2[..., m]
    alpha = np.asarray(pcen.alpha, dtype=y2.dtype)[:, None]
    delta = np.asarray(pcen.delta, dtype=y2.dtype)[:, None]
    r = np.asarray(pcen.r, dtype=y2.dtype)[:, None]
    log_base = np.log(pcen.eps + smooth)
    gain = np.exp(-alpha * log_base)
    u = y2 * gain + delta
    out = u ** r - delta ** r
    return out, (y2, smooth, log_base, gain, u, alpha, delta, r, s, pcen.eps)


def _pcen_backward(g3, cache):
    y2, smooth, log_base, gain, u, alpha, delta, r, s, eps = cache
    M = y2.shape[-1]
    du = g3 * r * u ** (r - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_delta = np.where(delta > 0, np.log(delta), 0.0)
        d_r_const = np.where(delta > 0, delta ** r * log_delta, 0.0)
    d_r = np.sum(g3 * (u ** r * np.log(u) - d_r_const), axis=(0, 2))
    d_delta = np.sum(du, axis=(0, 2)) - np.sum(g3, axis=(0, 2)) * (r * delta ** (r - 1.0))[:, 0]
    d_alpha = np.sum(du * y2 * gain * -log_base, axis=(0, 2))
    d_y2 = du * gain
    d_smooth = du * y2 * gain * (-alpha) / (eps + smooth)
    carry = np.zeros_like(d_smooth[..., 0])
    for m in range(M - 1, 0, -1):
        total = d_smooth[..., m] + carry
        d_y2[..., m] += s * total
        carry = (1.0 - s) * total
    d_y2[..., 0] += d_smooth[..., 0] + carry
    return d_y2, d_alpha, d_delta, d_r



# ---------------------------------------------------------------- public API

def _as_batch(x):
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    single = x.ndim == 1
    return (x[None] if single else x), single


def filter_stage(x, params: GaborFilterParams, width: int) -> np.ndarray:
    """Squared modulus of the complex Gabor filterbank output, same length as ``x``."""
    xb, single = _as_batch(x)
    y1, _ = _filter_forward(xb, params, width)
    return y1[0] if single else y1


def pooling_stage(y1, params: PoolingParams) -> np.ndarray:
    """Per-channel Gaussian low-pass followed by subsampling at ``stride``."""
    y = np.asarray(y1)
    single = y.ndim == 2
    y2, _ = _pool_forward(y[None] if single else y, params)
    return y2[0] if single else y2


def pcen_stage(y2, params: PcenParams) -> np.ndarray:
    y = np.asarray(y2)
    single = y.ndim == 2
    y3, _ = _pcen_forward(y[None] if single else y, params)
    return y3[0] if single else y3


def forward_with_cache(x, params: FrontendParams):
    """Batched forward ``(B, L) -> (B, N, M)`` plus everything the backward pass needs."""
    y1, c1 = _filter_forward(x, params.gabor, params.kernel_width)
    y2, c2 = _pool_forward(y1, params.pooling)
    y3, c3 = _pcen_forward(y2, params.pcen)
    return y3, (c1, c2, c3)


def backward(upstream, cache) -> dict[str, np.ndarray]:
    """Parameter gradients given ``dC/d(features)`` of shape ``(B, N, M)``."""
    c1, c2, c3 = cache
    d_y2, d_alpha, d_delta, d_r = _pcen_backward(upstream, c3)
    d_y1, d_sigma_p = _pool_backward(d_y2, c2)
    d_mu, d_sigma_t = _filter_backward(d_y1, c1)
    return {"mu": d_mu, "sigma_t": d_sigma_t, "sigma_p": d_sigma_p,
            "alpha": d_alpha, "delta": d_delta, "r": d_r}


def frontend_forward(x, params: FrontendParams) -> np.ndarray:
    """Map a chunk ``(L,)`` to an ``(N, M)`` feature map (or a batch to ``(B, N, M)``)."""
    xb, single = _as_batch(x)
    y3, _ = forward_with_cache(xb, params)
    return y3[0] if single else y3


def frontend_gradients(x, params: FrontendParams, upstream) -> dict[str, np.ndarray]:
    xb, single = _as_batch(x)
    upstream = np.asarray(upstream, dtype=xb.dtype)
    if not np.all(np.isfinite(upstream)):
        raise NumericError("upstream gradient contains non-finite values")
    y3, cache = forward_with_cache(xb, params)
    if single:
        upstream = upstream[None]
    if upstream.shape != y3.shape:
        raise ParameterError(f"upstream shape {upstream.shape} != feature shape {y3.shape}")
    return backward(upstream, cache)
