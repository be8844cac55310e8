"""Binary netpbm readers/writers (P5 grayscale, P6 color), maxval 255.

Class-index maps and camera masks travel as P5 PGM; rendered views as
P6 PPM. Only the 8-bit binary variants are supported.
"""

from __future__ import annotations

import numpy as np


def _read_header(blob: bytes, magic: bytes) -> tuple[int, int, int]:
    if not blob.startswith(magic):
        raise ValueError(f"expected {magic.decode()} file, got {blob[:2]!r}")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    tokens: list[int] = []
    pos = len(magic)
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(blob[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    return width, height, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM into a (height, width) uint8 array."""
    blob = open(path, "rb").read()
    width, height, pos = _read_header(blob, b"P5")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return data.reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    """Write a (height, width) uint8 array as binary P5 PGM."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"PGM image must be 2-d, got shape {image.shape}")
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode())
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM into a (height, width, 3) uint8 array."""
    blob = open(path, "rb").read()
    width, height, pos = _read_header(blob, b"P6")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height * 3, offset=pos)
    return data.reshape(height, width, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (height, width, 3) uint8 array as binary P6 PPM."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"PPM image must be (h, w, 3), got shape {image.shape}")
    height, width = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode())
        fh.write(image.tobytes())
