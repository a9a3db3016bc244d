"""Binary checkpoints: magic, u32 header length, JSON header, float32 arrays.

The header records the config, the seed, and every array's name and shape in
order; array bytes follow in exactly that order. Weights are stored as
float32, so a float32 training state round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..diffcore import Tensor
from ..errors import DataError

MODEL_MAGIC = b"MMVC1"
TABULAR_MAGIC = b"MMVT1"


def save_checkpoint(path, magic: bytes, config_dict: dict, params: dict, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(params)
    header = {
        "config": config_dict,
        "seed": seed,
        "arrays": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            data = params[n].data if isinstance(params[n], Tensor) else params[n]
            f.write(np.ascontiguousarray(data, dtype=np.float32).tobytes())
    return path


def load_checkpoint(path, magic: bytes) -> tuple[dict, dict, int]:
    """Returns (config_dict, name -> float32 array, seed)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"checkpoint {path} is missing") from None
    if len(raw) < len(magic) + 4 or raw[: len(magic)] != magic:
        raise DataError(f"checkpoint {path}: bad magic, expected {magic!r}")
    off = len(magic)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"checkpoint {path}: corrupt header: {e}") from None
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = off + 4 * count
        if end > len(raw):
            raise DataError(f"checkpoint {path}: truncated at array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw[off:end], dtype="<f4").reshape(shape).copy()
        off = end
    if off != len(raw):
        raise DataError(f"checkpoint {path}: {len(raw) - off} trailing bytes")
    return header["config"], arrays, int(header.get("seed", 0))
