"""Checkpoint file format.

Layout, all little-endian:

    NBRS1\\n
    <canonical JSON config on one line>\\n
    then for each parameter, in store order:
        <name> <dim0> <dim1> ...\\n
        <row-major float32 values>

Loading then saving reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from nbrs.errors import DataError
from nbrs.numerics.optim import ParamStore

MAGIC = b"NBRS1\n"


def _config_bytes(config: dict) -> bytes:
    return (json.dumps(config, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


def save_checkpoint(path, config: dict, store: ParamStore) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_config_bytes(config))
        for name, t in store.items():
            arr = np.ascontiguousarray(t.data, dtype="<f4")
            header = name + "".join(f" {d}" for d in arr.shape) + "\n"
            fh.write(header.encode("utf-8"))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict, ParamStore]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise DataError(f"not a checkpoint (bad magic): {path}")
    pos = len(MAGIC)
    nl = blob.index(b"\n", pos)
    try:
        config = json.loads(blob[pos:nl].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint config is not valid JSON: {path}") from exc
    pos = nl + 1

    store = ParamStore()
    while pos < len(blob):
        nl = blob.index(b"\n", pos)
        fields = blob[pos:nl].decode("utf-8").split(" ")
        name, shape = fields[0], tuple(int(d) for d in fields[1:])
        pos = nl + 1
        count = int(np.prod(shape)) if shape else 1
        raw = blob[pos : pos + 4 * count]
        if len(raw) != 4 * count:
            raise DataError(f"checkpoint truncated in parameter {name}: {path}")
        pos += 4 * count
        store.add(name, np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
    store.step = int(config.get("step", 0))
    return config, store
