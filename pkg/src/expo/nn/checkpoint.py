"""``.ckpt`` parameter files.

Layout (all little-endian)::

    uint32  n            number of layer widths
    uint32  widths[n]
    float32 values[...]  flat parameters

Ensemble networks store K members back to back, so the payload length is a
multiple of the single-member size.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from expo.errors import CheckpointError
from expo.nn.layers import ParamVector


def save_params(path, vec):
    path = Path(path)
    header = struct.pack(f"<I{len(vec.layout)}I", len(vec.layout), *vec.layout)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.asarray(vec.values, dtype="<f4").tobytes())


def load_params(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 4:
        raise CheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack_from("<I", raw, 0)
    start = 4 + 4 * n
    if n < 2 or len(raw) < start:
        raise CheckpointError(f"{path}: bad layout header")
    layout = struct.unpack_from(f"<{n}I", raw, 4)
    payload = raw[start:]
    if len(payload) % 4 or not payload:
        raise CheckpointError(f"{path}: payload is not a float32 array")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise CheckpointError(f"{path}: non-finite parameters")
    return ParamVector(values, layout)


def save_network(path, net):
    save_params(path, net.param_vector())


def load_network(path, net):
    vec = load_params(path)
    if vec.layout != net.layout or len(vec) != net.num_params():
        raise CheckpointError(
            f"{path}: layout {vec.layout} ({len(vec)} values) does not fit network "
            f"{net.layout} ({net.num_params()} values)"
        )
    net.load_param_vector(vec)
