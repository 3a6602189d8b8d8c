"""TACNET1 checkpoint files.

Layout::

    b"TACNET1"                 7-byte magic
    uint32 little-endian       header length in bytes
    UTF-8 JSON header          format_version, window, frontend, classifier,
                               tensors: [{name, shape, dtype, offset}, ...]
    payload                    little-endian float32 tensors in directory order

Offsets are relative to the start of the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .classifier import CompactCnnConfig
from .errors import (BadMagicError, CheckpointError, ShapeMismatchError,
                     TruncatedPayloadError, VersionMismatchError)
from .frontend import GaborFilterParams, FrontendParams, PcenParams, PoolingParams
from .model import TacNet
from .signal_core import WindowConfig

MAGIC = b"TACNET1"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


def save_checkpoint(model: TacNet, path) -> None:
    tensors = model.parameters()
    directory, offset = [], 0
    for name, arr in tensors.items():
        directory.append({"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset})
        offset += int(np.prod(arr.shape)) * _DTYPE.itemsize
    header = {
        "format_version": FORMAT_VERSION,
        "window": model.window.to_dict(),
        "frontend": model.frontend.config(),
        "classifier": model.cnn.to_dict(),
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())


def load_checkpoint(path) -> TacNet:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic in {path}: expected {MAGIC!r}")
    pos = len(MAGIC)
    if len(raw) < pos + 4:
        raise TruncatedPayloadError(f"truncated header length in {path}")
    (hlen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if len(raw) < pos + hlen:
        raise TruncatedPayloadError(f"truncated header in {path}")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header in {path}: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported checkpoint version {version}; expected {FORMAT_VERSION}")
    payload = raw[pos + hlen:]

    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        if entry.get("dtype") != "float32":
            raise CheckpointError(f"{entry['name']}: unsupported dtype {entry.get('dtype')}")
        nbytes = int(np.prod(shape)) * _DTYPE.itemsize
        start = entry["offset"]
        if start + nbytes > len(payload):
            raise TruncatedPayloadError(
                f"truncated payload: {entry['name']} needs bytes [{start}, {start + nbytes}) "
                f"but payload has {len(payload)}")
        tensors[entry["name"]] = np.frombuffer(payload, _DTYPE, count=int(np.prod(shape)),
                                               offset=start).reshape(shape).astype(np.float32)

    fcfg = header["frontend"]
    n = fcfg["n_filters"]
    for name in ("mu", "sigma_t", "sigma_p", "alpha", "delta", "r"):
        key = f"frontend.{name}"
        if key not in tensors:
            raise ShapeMismatchError(f"missing tensor {key}")
        if tensors[key].shape != (n,):
            raise ShapeMismatchError(f"{key}: shape {tensors[key].shape} != ({n},)")
    frontend = FrontendParams(
        gabor=GaborFilterParams(tensors["frontend.mu"], tensors["frontend.sigma_t"]),
        pooling=PoolingParams(tensors["frontend.sigma_p"], stride=fcfg["stride"], kernel_width=fcfg["pool_width"]),
        pcen=PcenParams(tensors["frontend.alpha"], tensors["frontend.delta"], tensors["frontend.r"],
                        s=fcfg["s"], eps=fcfg["eps"]),
        kernel_width=fcfg["kernel_width"],
    )
    cnn = CompactCnnConfig.from_dict(header["classifier"])
    window = WindowConfig(**header["window"])
    expected = TacNet.create(window, cnn, n_filters=n).classifier
    classifier = {}
    for name, ref in expected.items():
        key = f"classifier.{name}"
        if key not in tensors:
            raise ShapeMismatchError(f"missing tensor {key}")
        if tensors[key].shape != ref.shape:
            raise ShapeMismatchError(f"{key}: shape {tensors[key].shape} != {ref.shape}")
        classifier[name] = tensors[key]
    return TacNet(window, frontend, cnn, classifier)
