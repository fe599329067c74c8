"""Portable model checkpoints.

Layout (all integers little-endian):
  * one magic line ``switchlab-checkpoint 1``
  * the model config text (key-value format from config.py), terminated by
    a line containing only ``---``
  * one index line per tensor: ``name ndim dim1 dim2 ...``
  * a line containing only ``===``
  * the tensor payloads, in index order, as raw little-endian float64.
"""

from __future__ import annotations

import numpy as np

from .config import dump_config, from_model_spec, parse_config, to_model_spec
from .model import Model, build

MAGIC = "switchlab-checkpoint 1"


class CheckpointError(ValueError):
    pass


def save(path: str, model: Model) -> None:
    names = sorted(model.params)
    with open(path, "wb") as f:
        f.write((MAGIC + "\n").encode())
        f.write(dump_config(from_model_spec(model.spec)).encode())
        f.write(b"---\n")
        for name in names:
            shape = model.params[name].shape
            f.write(f"{name} {len(shape)} {' '.join(map(str, shape))}".rstrip().encode() + b"\n")
        f.write(b"===\n")
        for name in names:
            f.write(np.ascontiguousarray(model.params[name].data,
                                         dtype="<f8").tobytes())


def load(path: str) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    head, sep, payload = blob.partition(b"\n===\n")
    if not sep:
        raise CheckpointError("missing tensor payload marker")
    text = head.decode()
    lines = text.split("\n")
    if lines[0] != MAGIC:
        raise CheckpointError(f"bad magic line {lines[0]!r}")
    try:
        split = lines.index("---")
    except ValueError:
        raise CheckpointError("missing config terminator") from None
    spec = to_model_spec(parse_config("\n".join(lines[1:split])))
    index = []
    for line in lines[split + 1:]:
        if not line:
            continue
        parts = line.split()
        name, ndim = parts[0], int(parts[1])
        shape = tuple(int(d) for d in parts[2:])
        if len(shape) != ndim:
            raise CheckpointError(f"index line for '{name}' is inconsistent")
        index.append((name, shape))
    model = build(spec, seed=0)
    if sorted(model.params) != sorted(n for n, _ in index):
        raise CheckpointError("checkpoint tensors do not match the model spec")
    offset = 0
    for name, shape in index:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        chunk = payload[offset * 8:(offset + n) * 8]
        if len(chunk) != n * 8:
            raise CheckpointError(f"truncated payload at tensor '{name}'")
        if model.params[name].shape != shape:
            raise CheckpointError(f"shape mismatch for '{name}'")
        model.params[name].data = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += n
    if offset * 8 != len(payload):
        raise CheckpointError("trailing bytes after last tensor")
    return model
