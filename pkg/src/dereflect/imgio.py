"""Image file I/O: 8-bit PNG via Pillow and binary PPM (P6) without it.

Float samples in [0, 1] map to bytes by round(v * 255) clamped to
[0, 255]; bytes map back by / 255.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage

from .errors import DataError
from .validation import check_image

__all__ = [
    "to_uint8",
    "from_uint8",
    "read_image",
    "write_image",
    "read_ppm",
    "write_ppm",
    "list_image_files",
]

IMAGE_EXTENSIONS = (".png", ".ppm")


def to_uint8(img: np.ndarray) -> np.ndarray:
    img = check_image(img)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return (raw.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def write_ppm(path, img: np.ndarray) -> None:
    raw = to_uint8(img)
    h, w, _ = raw.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raw.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise DataError(f"{path}: not a binary P6 PPM file")
    # header: magic, width, height, maxval, then one whitespace byte
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise DataError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 PPMs are supported, got {maxval}")
    expected = w * h * 3
    data = blob[pos : pos + expected]
    if len(data) != expected:
        raise DataError(f"{path}: truncated PPM payload")
    return from_uint8(np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3))


def write_image(path, img: np.ndarray) -> None:
    """Write a float image as PNG or PPM depending on the extension."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        write_ppm(path, img)
    elif ext == ".png":
        PILImage.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")
    else:
        raise DataError(f"unsupported image extension {ext!r} (use .png or .ppm)")


def read_image(path) -> np.ndarray:
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        return read_ppm(path)
    try:
        with PILImage.open(path) as im:
            rgb = im.convert("RGB")
            raw = np.asarray(rgb, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from exc
    return from_uint8(raw)


def list_image_files(directory) -> list[str]:
    """Sorted image paths directly under directory."""
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise DataError(f"{directory}: not a directory")
    names = sorted(
        n
        for n in os.listdir(directory)
        if os.path.splitext(n)[1].lower() in IMAGE_EXTENSIONS
    )
    return [os.path.join(directory, n) for n in names]
