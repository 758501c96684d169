"""Binary model file format.

All integers are little-endian.

======  ==========  ====================================================
offset  type        content
======  ==========  ====================================================
0       4 bytes     magic ``b"NFPM"``
4       u16         format version (currently 1)
6       u32         length ``L`` of the header JSON
10      L bytes     UTF-8 JSON: kind, base_score, learning_rate,
                    n_features, params, column_names, loss_trace
10+L    u32         number of trees
...     per tree    u32 node count ``m``, then six arrays of length ``m``:
                    feature i32, threshold f64, bin i32, left i32,
                    right i32, value f64
======  ==========  ====================================================

A node is a leaf when its feature is -1. Floats are stored bit-exactly, so a
round trip reproduces predictions exactly.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .ensemble import EnsembleModel
from .tree import Tree

MAGIC = b"NFPM"
FORMAT_VERSION = 1
_ARRAYS = (("feature", "<i4"), ("threshold", "<f8"), ("bin", "<i4"),
           ("left", "<i4"), ("right", "<i4"), ("value", "<f8"))


class FormatVersionMismatch(ValueError):
    pass


def serialize(model: EnsembleModel) -> bytes:
    header = {
        "kind": model.kind,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "n_features": model.n_features,
        "params": model.params,
        "column_names": model.column_names,
        "loss_trace": model.loss_trace,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", FORMAT_VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(model.trees)))
    for t in model.trees:
        buf.write(struct.pack("<I", t.n_nodes))
        for name, dt in _ARRAYS:
            buf.write(np.asarray(getattr(t, name)).astype(dt).tobytes())
    return buf.getvalue()


def _take(data: bytes, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(data):
        raise FormatVersionMismatch("truncated model file")
    return data[pos:pos + n], pos + n


def deserialize(data: bytes) -> EnsembleModel:
    if data[:4] != MAGIC:
        raise FormatVersionMismatch("not a model file (bad magic)")
    raw, pos = _take(data, 4, 6)
    version, hlen = struct.unpack("<HI", raw)
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    raw, pos = _take(data, pos, hlen)
    header = json.loads(raw.decode())
    raw, pos = _take(data, pos, 4)
    (n_trees,) = struct.unpack("<I", raw)
    trees = []
    for _ in range(n_trees):
        raw, pos = _take(data, pos, 4)
        (m,) = struct.unpack("<I", raw)
        arrays = {}
        for name, dt in _ARRAYS:
            size = np.dtype(dt).itemsize * m
            raw, pos = _take(data, pos, size)
            native = np.float64 if dt.endswith("f8") else np.int32
            arrays[name] = np.frombuffer(raw, dtype=dt).astype(native)
        trees.append(Tree(**arrays))
    if pos != len(data):
        raise FormatVersionMismatch("trailing bytes after model payload")
    return EnsembleModel(header["kind"], trees, header["base_score"], header["learning_rate"],
                         header["n_features"], header["params"], header["column_names"],
                         header["loss_trace"])


def save_model(model: EnsembleModel, path) -> None:
    Path(path).write_bytes(serialize(model))


def load_model(path) -> EnsembleModel:
    return deserialize(Path(path).read_bytes())
