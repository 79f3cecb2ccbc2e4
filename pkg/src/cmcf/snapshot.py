"""CMCF1 snapshot files.

One ASCII header line

    CMCF1 n=<n> dims=<N_1,...> h=<h_1,...> origin=<o_1,...> t=<time> far=<far_field>

followed by the node values as little-endian float64 in C order (last axis
fastest). Floats in the header are written with ``repr`` so a write/read
round trip is bit-exact. ``far=none`` marks extrapolating boundaries.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField

MAGIC = "CMCF1"


class SnapshotError(ValueError):
    pass


def _floats(values):
    return ",".join(repr(float(v)) for v in values)


def encode(field: ScalarField) -> bytes:
    g = field.grid
    far = "none" if field.far_field is None else repr(float(field.far_field))
    header = (f"{MAGIC} n={g.ndim} dims={','.join(str(c) for c in g.counts)} "
              f"h={_floats(g.spacing)} origin={_floats(g.origin)} "
              f"t={float(field.time)!r} far={far}\n")
    body = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    return header.encode("ascii") + body


def decode(blob: bytes) -> ScalarField:
    end = blob.find(b"\n")
    if end < 0:
        raise SnapshotError("missing header line")
    tokens = blob[:end].decode("ascii").split()
    if not tokens or tokens[0] != MAGIC:
        raise SnapshotError(f"not a {MAGIC} snapshot")
    meta = {}
    for tok in tokens[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise SnapshotError(f"malformed header token {tok!r}")
        meta[key] = val
    try:
        n = int(meta["n"])
        dims = tuple(int(v) for v in meta["dims"].split(","))
        h = tuple(float(v) for v in meta["h"].split(","))
        origin = tuple(float(v) for v in meta["origin"].split(","))
        t = float(meta["t"])
        far = None if meta["far"] == "none" else float(meta["far"])
    except (KeyError, ValueError) as exc:
        raise SnapshotError(f"bad snapshot header: {exc}") from None
    if not (len(dims) == len(h) == len(origin) == n):
        raise SnapshotError("header dimension fields disagree")
    body = blob[end + 1:]
    count = int(np.prod(dims))
    if len(body) != 8 * count:
        raise SnapshotError(f"expected {8 * count} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(dims).astype(float)
    return ScalarField(Grid(dims, h, origin), values, far, t)


def write(path, field: ScalarField) -> Path:
    path = Path(path)
    path.write_bytes(encode(field))
    return path


def read(path) -> ScalarField:
    return decode(Path(path).read_bytes())
