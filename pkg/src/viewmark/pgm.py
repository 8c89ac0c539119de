"""Binary PGM (P5, 8-bit) read/write and layer/image value mapping.

Hand-rolled so exported bytes are reproducible: fixed header layout, no
comments, no timestamps.
"""

from __future__ import annotations

import numpy as np

from .geometry import BinaryLayer

__all__ = [
    "write_pgm",
    "read_pgm",
    "layer_to_image",
    "image_to_layer",
    "float_to_image",
    "image_to_float",
]


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError(f"expected a 2-D uint8 image, got {image.dtype} {image.shape}")
    rows, cols = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header = magic, width, height, maxval tokens; '#' comments allowed
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    cols, rows, maxval = tokens
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (expected 255)")
    pixels = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos)
    return pixels.reshape(rows, cols).copy()


def layer_to_image(layer: BinaryLayer) -> np.ndarray:
    """Map layer bits to display values: 0 -> 0, 1 -> 255."""
    return (layer.pixels * np.uint8(255)).astype(np.uint8)


def image_to_layer(image: np.ndarray, role: str = "front") -> BinaryLayer:
    """Inverse of layer_to_image; rejects images with non-binary pixels."""
    image = np.asarray(image)
    vals = np.unique(image)
    if not np.isin(vals, (0, 255)).all():
        raise ValueError(
            f"non-binary input pixels: expected only 0 and 255, found {vals.tolist()}"
        )
    return BinaryLayer((image > 0).astype(np.uint8), role=role)


def float_to_image(values: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] floats to 8-bit; rendering keeps floats until this point."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.rint(v * 255.0).astype(np.uint8)


def image_to_float(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) / 255.0
