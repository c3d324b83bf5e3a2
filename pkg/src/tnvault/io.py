"""Tensor file formats.

``.dt`` layout::

    b"DTEN" | u8 version (=1) | u8 ndims | ndims x u64 LE mode sizes | f64 LE data

with the data in column-major order.  A ``.tnc`` file is a ``.dt`` file
holding one core/factor, accompanied by a ``<name>.tnc.json`` sidecar.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FormatError
from .tensor import as_tensor

DT_MAGIC = b"DTEN"
DT_VERSION = 1

__all__ = [
    "encode_dt",
    "decode_dt",
    "write_dt",
    "read_dt",
    "read_csv",
    "read_pnm",
    "load_tensor",
    "write_tnc",
    "read_tnc",
]


def encode_dt(t: np.ndarray) -> bytes:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        t = t.reshape(1)
    if t.ndim > 255:
        raise FormatError("at most 255 modes fit in a .dt header")
    head = DT_MAGIC + struct.pack("<BB", DT_VERSION, t.ndim)
    head += struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + np.ravel(t, order="F").astype("<f8", copy=False).tobytes()


def decode_dt(buf: bytes) -> np.ndarray:
    if len(buf) < 6 or buf[:4] != DT_MAGIC:
        raise FormatError("not a .dt blob (bad magic)")
    version, ndims = struct.unpack_from("<BB", buf, 4)
    if version != DT_VERSION:
        raise FormatError(f"unsupported .dt version {version}")
    off = 6 + 8 * ndims
    if ndims == 0 or len(buf) < off:
        raise FormatError("truncated .dt header")
    shape = struct.unpack_from(f"<{ndims}Q", buf, 6)
    n = int(np.prod(shape))
    if any(s < 1 for s in shape) or len(buf) != off + 8 * n:
        raise FormatError(f".dt payload length does not match shape {shape}")
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=off)
    # own, aligned, native-endian copy
    return np.array(data.reshape(shape, order="F"), dtype=np.float64, order="F")


def write_dt(path: str | Path, t: np.ndarray) -> None:
    Path(path).write_bytes(encode_dt(t))


def read_dt(path: str | Path) -> np.ndarray:
    return decode_dt(Path(path).read_bytes())


def read_csv(path: str | Path) -> np.ndarray:
    """2-D numeric CSV; rows become the first mode."""
    t = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return as_tensor(t)


def read_pnm(path: str | Path) -> np.ndarray:
    """8-bit PGM/PPM as floats in [0, 255]; shape (H, W) or (H, W, 3)."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if "RGB" in im.mode else "L")
        return np.asarray(im, dtype=np.float64).copy()


def load_tensor(path: str | Path) -> np.ndarray:
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix in (".dt", ".tnc"):
        return read_dt(p)
    if suffix == ".csv":
        return read_csv(p)
    if suffix in (".pgm", ".ppm", ".pnm"):
        return read_pnm(p)
    raise FormatError(f"unsupported input format {suffix!r} for {p}")


def write_tnc(path: str | Path, core: np.ndarray, meta: dict[str, Any]) -> None:
    p = Path(path)
    write_dt(p, core)
    side = p.with_name(p.name + ".json")
    side.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def read_tnc(path: str | Path) -> tuple[np.ndarray, dict[str, Any]]:
    p = Path(path)
    core = read_dt(p)
    side = p.with_name(p.name + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return core, meta
