"""Binary PPM (P6) reader/writer; no third-party decoders needed."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary P6, maxval 255."""
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"PPM image must be (H, W, 3), got shape {a.shape}")
    if a.dtype != np.uint8:
        raise ValueError(f"PPM image must be uint8, got {a.dtype}")
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(a.tobytes())


def _read_token(fh) -> bytes:
    # whitespace-separated token; '#' comments run to end of line
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            if tok:
                return tok
            raise ValueError("unexpected end of PPM header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = fh.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P6 file into an (H, W, 3) uint8 array."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM (magic {magic!r})")
        w = int(_read_token(fh))
        h = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise ValueError(f"{path}: unsupported maxval {maxval}")
        raw = fh.read(h * w * 3)
        if len(raw) != h * w * 3:
            raise ValueError(f"{path}: truncated pixel data "
                             f"({len(raw)} of {h * w * 3} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()
