"""Tensor files: raw little-endian float32 with a JSON sidecar, or CSV for rank 1.

``weights.bin`` is paired with ``weights.bin.json`` holding
``{"shape": [...], "channel_axis": int | null}``.  A ``.csv`` file holds one
value per line and is read as a rank-1 tensor without a channel axis.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .quantsim import Tensor

__all__ = ["TensorFileError", "read_tensor", "write_tensor", "sidecar_path"]

_DTYPE = np.dtype("<f4")


class TensorFileError(ValueError):
    pass


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def _is_csv(path: Path) -> bool:
    return path.suffix.lower() == ".csv"


def _read_csv(path: Path) -> Tensor:
    vals = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals.append(float(s))
        except ValueError:
            if not vals and lineno == 1:
                continue  # header row
            raise TensorFileError(f"{path}:{lineno}: not a number: {s!r}") from None
    if not vals:
        raise TensorFileError(f"{path}: no values")
    return Tensor(np.asarray(vals, dtype=np.float64))


def _read_sidecar(path: Path):
    side = sidecar_path(path)
    if not side.exists():
        raise TensorFileError(f"missing sidecar {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise TensorFileError(f"malformed sidecar {side}: {exc}") from None
    if not isinstance(meta, dict) or "shape" not in meta:
        raise TensorFileError(f"sidecar {side} needs a 'shape' entry")
    shape = meta["shape"]
    if not isinstance(shape, list) or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape):
        raise TensorFileError(f"sidecar {side}: shape must be a list of non-negative integers")
    axis = meta.get("channel_axis")
    if axis is not None and (not isinstance(axis, int) or isinstance(axis, bool)):
        raise TensorFileError(f"sidecar {side}: channel_axis must be an integer or null")
    return tuple(shape), axis


def read_tensor(path) -> Tensor:
    """Load a tensor; raises :class:`TensorFileError` on any malformed input."""
    p = Path(path)
    if not p.exists():
        raise TensorFileError(f"no such file: {p}")
    if _is_csv(p):
        return _read_csv(p)
    shape, axis = _read_sidecar(p)
    raw = p.read_bytes()
    if len(raw) == 0:
        raise TensorFileError(f"{p}: empty file")
    n = math.prod(shape)
    if len(raw) != n * _DTYPE.itemsize:
        raise TensorFileError(f"{p}: {len(raw)} bytes does not match shape {list(shape)} of float32")
    data = np.frombuffer(raw, dtype=_DTYPE).astype(np.float64).reshape(shape)
    try:
        return Tensor(data, axis)
    except ValueError as exc:
        raise TensorFileError(f"{p}: {exc}") from None


def write_tensor(path, t: Tensor) -> None:
    """Write ``t``; CSV paths get one ``repr`` per line, anything else binary32 + sidecar."""
    p = Path(path)
    if _is_csv(p):
        if t.data.ndim != 1:
            raise TensorFileError("CSV output is for rank-1 tensors only")
        p.write_text("".join(f"{v!r}\n" for v in t.data.tolist()))
        return
    p.write_bytes(np.ascontiguousarray(t.data, dtype=_DTYPE).tobytes())
    meta = {"shape": list(t.shape), "channel_axis": t.channel_axis}
    sidecar_path(p).write_text(json.dumps(meta) + "\n")
