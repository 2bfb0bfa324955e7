"""Single-file checkpoint container.

Layout: 5-byte magic ``URWK1``, a little-endian uint64 manifest length, the
manifest JSON (tensor names, shapes, dtypes, payload offsets, plus free-form
metadata), then the raw little-endian float32 payload. Tensors are stored in
manifest order; offsets are relative to the payload start. Saving the result
of a load reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["save_checkpoint", "load_checkpoint", "apply_parameters"]

MAGIC = b"URWK1"


def save_checkpoint(path: str | Path, tensors: list[tuple[str, np.ndarray]], meta: dict) -> None:
    entries = []
    payloads = []
    offset = 0
    for name, arr in tensors:
        a32 = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(a32.shape), "dtype": "f32", "offset": offset})
        payloads.append(a32.tobytes())
        offset += a32.nbytes
    blob = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (meta, name -> float32 array) preserving manifest order."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    if raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (blob_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    manifest = json.loads(raw[start : start + blob_len].decode("utf-8"))
    payload = raw[start + blob_len :]
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
        tensors[entry["name"]] = arr.reshape(shape)
    return manifest["meta"], tensors


def apply_parameters(model, tensors: dict[str, np.ndarray], prefix: str = "") -> None:
    """Copy checkpoint arrays into a model, validating names and shapes.

    The first mismatching tensor is named in the error so a wrong-config
    load fails loudly rather than half-applying.
    """
    for name, param in model.named_parameters():
        key = prefix + name
        if key not in tensors:
            raise DataError(f"checkpoint missing tensor {key!r}")
        arr = tensors[key]
        if tuple(arr.shape) != param.data.shape:
            raise DataError(
                f"checkpoint tensor {key!r} has shape {tuple(arr.shape)}, model expects {param.data.shape}"
            )
        param.data = arr.astype(np.float64)
