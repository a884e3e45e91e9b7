"""Slice rendering of label volumes to binary PPM (P6) images.

For a slice along an axis, image columns follow the first remaining volume
axis and rows the second (axis z: columns x, rows y). Several volumes are
placed left to right with a 2-pixel separator.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ShapeError
from .nifti import atomic_write
from .volume import LabelVolume

PALETTE = np.array(
    [
        (0, 0, 0),  # background
        (255, 0, 0),  # 1 necrotic core
        (0, 255, 0),  # 2 edema
        (255, 255, 0),  # 3 enhancing tumor
        (0, 0, 255),
        (255, 0, 255),
        (0, 255, 255),
        (255, 128, 0),
    ],
    dtype=np.uint8,
)
SEPARATOR = (128, 128, 128)
SEPARATOR_WIDTH = 2
AXES = {"x": 0, "sagittal": 0, "y": 1, "coronal": 1, "z": 2, "axial": 2}


def slice_rgb(volume: LabelVolume, axis: int | str, index: int) -> np.ndarray:
    """RGB image (rows, cols, 3) of one slice."""
    ax = AXES[axis] if isinstance(axis, str) else int(axis)
    if ax not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis!r}")
    n = volume.shape[ax]
    if not 0 <= index < n:
        raise IndexError(f"slice index {index} out of range for axis {ax} of size {n}")
    if volume.voxels.max(initial=0) >= len(PALETTE):
        raise ValueError(f"palette covers labels 0..{len(PALETTE) - 1}")
    plane = np.take(volume.voxels, index, axis=ax)  # (first remaining, second remaining)
    return PALETTE[plane.T]


def render(volumes: list[LabelVolume], axis: int | str, index: int) -> np.ndarray:
    if not 1 <= len(volumes) <= 3:
        raise ValueError(f"render takes 1 to 3 volumes, got {len(volumes)}")
    tiles = [slice_rgb(v, axis, index) for v in volumes]
    rows = tiles[0].shape[0]
    if any(t.shape != tiles[0].shape for t in tiles):
        raise ShapeError("volumes render to slices of different sizes")
    sep = np.empty((rows, SEPARATOR_WIDTH, 3), dtype=np.uint8)
    sep[:] = SEPARATOR
    parts = [tiles[0]]
    for t in tiles[1:]:
        parts += [sep, t]
    return np.concatenate(parts, axis=1)


def encode_ppm(image: np.ndarray) -> bytes:
    rows, cols, _ = image.shape
    return f"P6\n{cols} {rows}\n255\n".encode("ascii") + np.ascontiguousarray(image, dtype=np.uint8).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ValueError("not a binary PPM")
    cols, rows = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=rows * cols * 3, offset=pos + 1)
    return pixels.reshape(rows, cols, 3)


def write_ppm(image: np.ndarray, path: str | Path) -> None:
    atomic_write(Path(path), encode_ppm(image))
