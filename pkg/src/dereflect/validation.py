"""Input validation helpers for image data.

Images are plain numpy arrays shaped (H, W, 3) with float32 samples in
[0, 1]. Everything that accepts user-supplied images funnels through
check_image / check_image_pair so error messages stay uniform.
"""

from __future__ import annotations

import numpy as np

__all__ = ["check_image", "check_image_pair", "check_images"]


def check_image(img, name: str = "image", *, copy: bool = False) -> np.ndarray:
    """Validate and canonicalize one image to float32 (H, W, 3) in [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(
            f"{name} must have shape (H, W, 3), got {arr.shape}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} has empty spatial dims {arr.shape[:2]}")
    if not np.issubdtype(arr.dtype, np.floating):
        raise ValueError(
            f"{name} must be a float array in [0, 1], got dtype {arr.dtype}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} samples must lie in [0, 1], got [{lo:g}, {hi:g}]")
    out = arr.astype(np.float32, copy=copy)
    return np.ascontiguousarray(out)


def check_image_pair(a, b, names: tuple[str, str] = ("first image", "second image")):
    """Validate two images and require matching dimensions."""
    a = check_image(a, names[0])
    b = check_image(b, names[1])
    if a.shape != b.shape:
        raise ValueError(
            f"{names[0]} has shape {a.shape} but {names[1]} has shape {b.shape}"
        )
    return a, b


def check_images(images, name: str = "images") -> list[np.ndarray]:
    """Validate a sequence (or stacked (N, H, W, 3) array) of images."""
    arr = np.asarray(images) if not isinstance(images, (list, tuple)) else images
    if isinstance(arr, np.ndarray):
        if arr.ndim != 4:
            raise ValueError(
                f"{name} must be a list of (H, W, 3) images or an (N, H, W, 3) "
                f"array, got shape {arr.shape}"
            )
        arr = list(arr)
    if len(arr) == 0:
        raise ValueError(f"{name} is empty")
    return [check_image(img, f"{name}[{i}]") for i, img in enumerate(arr)]
