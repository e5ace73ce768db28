"""Checkpoint file format: a JSON header line plus raw float64 buffers.

Layout (version 1):

* magic bytes ``CVT1``
* one UTF-8 JSON line ``{"version": 1, "meta": {...}, "entries":
  [{"name": ..., "shape": [...]}, ...]}`` terminated by ``\\n``
* the arrays' float64 little-endian C-order buffers concatenated in
  header order.

Keys in ``meta`` and the entry list are emitted sorted, so identical
contents produce identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["save_arrays", "load_arrays"]

_MAGIC = b"CVT1"


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()]
    header = {"version": 1, "meta": meta or {}, "entries": entries}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated buffer for {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return arrays, header["meta"]
