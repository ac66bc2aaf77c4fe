"""Binary PGM (P5) images, 8- or 16-bit, mapped to [0, 1].

16-bit samples are big-endian per the Netpbm convention.
"""

from __future__ import annotations

import numpy as np


class PgmError(ValueError):
    pass


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PgmError(f"unexpected end of header at offset {pos}")
    return data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a P5 image; returns float64 values in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    token, pos = _read_token(data, 0)
    if token != b"P5":
        raise PgmError(f"not a binary PGM (got {token!r})")
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise PgmError(f"bad header token {token!r}") from exc
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PgmError("non-positive image dimensions")
    if not (0 < maxval < 65536):
        raise PgmError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise PgmError(f"truncated pixel data at offset {pos + len(raw)}")
    img = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return img.astype(np.float64) / maxval


def write_pgm(path, image: np.ndarray) -> None:
    """Write values in [0, 1] as a 16-bit P5 image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise PgmError("image must be 2-D")
    if np.any(image < 0) or np.any(image > 1) or not np.all(np.isfinite(image)):
        raise PgmError("image values must lie in [0, 1]")
    quantized = np.floor(image * 65535.0 + 0.5).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode())
        fh.write(quantized.tobytes())
