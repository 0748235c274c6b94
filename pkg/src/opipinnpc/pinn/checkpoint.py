"""Self-describing binary checkpoints for ``MlpModel``.

Layout (little-endian throughout)::

    magic      8 bytes  b"OPIPINN\\0"
    version    uint32
    flags      uint32   bit 0: residual form
    time_index uint32
    n_sizes    uint32
    sizes      n_sizes x uint32
    t_range    2 x float64
    loss_dt    float64
    in_mean, in_scale, out_mean, out_scale, rate_mean, rate_scale   float64 arrays
    per layer: weights (row-major), biases     float64 arrays
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mlp import MlpModel

MAGIC = b"OPIPINN\x00"
VERSION = 1
_F8 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def to_bytes(model: MlpModel) -> bytes:
    parts = [MAGIC, struct.pack("<IIII", VERSION, int(model.residual), model.time_index, len(model.sizes)),
             struct.pack(f"<{len(model.sizes)}I", *model.sizes),
             np.asarray(model.t_range, dtype=_F8).tobytes(), np.asarray([model.loss_dt], dtype=_F8).tobytes()]
    for a in (model.in_mean, model.in_scale, model.out_mean, model.out_scale, model.rate_mean, model.rate_scale):
        parts.append(np.ascontiguousarray(a, dtype=_F8).tobytes())
    for W, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(W, dtype=_F8).tobytes())
        parts.append(np.ascontiguousarray(b, dtype=_F8).tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> MlpModel:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"checkpoint truncated while reading {what} "
                                  f"(need {pos + n} bytes, have {len(blob)})")
        out = blob[pos:pos + n]
        pos += n
        return out

    magic = take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"not a surrogate checkpoint (magic {magic!r}, expected {MAGIC!r})")
    version, flags, time_index, n_sizes = struct.unpack("<IIII", take(16, "header"))
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (this build reads version {VERSION})")
    sizes = struct.unpack(f"<{n_sizes}I", take(4 * n_sizes, "layer sizes"))
    if n_sizes < 2 or min(sizes) < 1:
        raise CheckpointError(f"invalid layer sizes {sizes}")

    def arr(n: int, what: str, shape=None):
        a = np.frombuffer(take(8 * n, what), dtype=_F8).astype(float)
        return a if shape is None else a.reshape(shape)

    t_range = tuple(float(t) for t in arr(2, "time range"))
    loss_dt = float(arr(1, "loss time step")[0])
    in_mean, in_scale = arr(sizes[0], "input mean"), arr(sizes[0], "input scale")
    out_mean, out_scale = arr(sizes[-1], "output mean"), arr(sizes[-1], "output scale")
    rate_mean, rate_scale = arr(sizes[-1], "head mean"), arr(sizes[-1], "head scale")
    weights, biases = [], []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        weights.append(arr(a * b, f"layer {i} weights", (b, a)))
        biases.append(arr(b, f"layer {i} biases"))
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after the last layer")
    try:
        return MlpModel(sizes, weights, biases, in_mean, in_scale, out_mean, out_scale,
                        rate_mean, rate_scale, bool(flags & 1), time_index, t_range, loss_dt)
    except ValueError as exc:
        raise CheckpointError(f"inconsistent checkpoint: {exc}") from exc


def save_checkpoint(model: MlpModel, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_checkpoint(path) -> MlpModel:
    return from_bytes(Path(path).read_bytes())
