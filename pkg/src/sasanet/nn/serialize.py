"""Self-describing binary checkpoint: JSON header plus raw parameter blocks.

Layout: 8-byte magic ``SASACKPT``, little-endian uint64 header length, the
UTF-8 JSON header, then each tensor's bytes in header order. The header
carries the format version, dtype, tensor names/shapes, and an arbitrary
metadata dict (model config, schema, bias term).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"SASACKPT"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    names = list(tensors.keys())
    dtype = None
    for n in names:
        arr = np.ascontiguousarray(tensors[n])
        if dtype is None:
            dtype = arr.dtype
        elif arr.dtype != dtype:
            raise CheckpointError(f"mixed dtypes in checkpoint: {dtype} vs {arr.dtype} ({n})")
        tensors[n] = arr
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": str(dtype) if dtype is not None else "float64",
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
        "meta": meta,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for n in names:
            fh.write(tensors[n].tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header['format_version']}")
        dtype = np.dtype(header["dtype"])
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated tensor data for '{spec['name']}'")
            tensors[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return tensors, header["meta"]
