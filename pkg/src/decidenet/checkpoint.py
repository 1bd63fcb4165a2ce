"""Parameter checkpoint container.

Layout: a magic line ``DCN1``, then per named parameter one ASCII
header line ``name dim0 dim1 ...`` followed by the values as 64-bit
IEEE-754 little-endian in row-major order, in declaration order.
A scalar parameter has no dims in its header and stores one value.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = b"DCN1\n"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays in dict insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in params.items():
            if not name or any(ch.isspace() for ch in name):
                raise CheckpointError(f"invalid parameter name {name!r}")
            # asarray keeps 0-d scalars 0-d (ascontiguousarray would not)
            a = np.asarray(arr, dtype=np.float64)
            if a.ndim and not a.flags.c_contiguous:
                a = np.ascontiguousarray(a)
            dims = " ".join(str(d) for d in a.shape)
            header = f"{name} {dims}".rstrip() + "\n"
            fh.write(header.encode("ascii"))
            fh.write(a.astype("<f8", copy=False).tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into an ordered name -> array dict."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: missing DCN1 magic")
        params: dict[str, np.ndarray] = {}
        while True:
            header = fh.readline()
            if not header:
                break
            parts = header.decode("ascii").split()
            if not parts:
                raise CheckpointError(f"{path}: empty parameter header")
            name, dims = parts[0], tuple(int(d) for d in parts[1:])
            if any(d <= 0 for d in dims):
                raise CheckpointError(f"{path}: bad dims for {name}: {dims}")
            count = int(np.prod(dims)) if dims else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated values for {name}")
            if name in params:
                raise CheckpointError(f"{path}: duplicate parameter {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return params
