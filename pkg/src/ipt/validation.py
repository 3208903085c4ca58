"""Input validation helpers shared by the estimators and pipeline stages."""
from __future__ import annotations

import numpy as np

from .imaging import ColorSpace, ImagePlane, ShapeError


def check_srgb(img) -> ImagePlane:
    if not isinstance(img, ImagePlane):
        img = ImagePlane(np.asarray(img), ColorSpace.SRGB8)
    if img.color_space is not ColorSpace.SRGB8:
        raise ShapeError(f"expected an SRGB8 image, got {img.color_space.value}")
    return img


def check_gray(img) -> np.ndarray:
    """Return the 2-D sample array of a single-channel image or array."""
    data = img.data if isinstance(img, ImagePlane) else np.asarray(img)
    if data.ndim != 2:
        raise ShapeError(f"expected a single-channel image, got shape {data.shape}")
    return data


def check_binary(img) -> np.ndarray:
    data = check_gray(img)
    if data.dtype != np.uint8 or not np.isin(data, (0, 255)).all():
        raise ShapeError("expected a binary image with samples in {0, 255}")
    return data


def check_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"modulation mask must be 2-D, got {mask.shape}")
    if not np.isin(mask, (-1, 0, 1)).all():
        raise ShapeError("modulation mask values must be in {-1, 0, +1}")
    return mask.astype(np.int8, copy=False)


def check_points(points, dim: int, min_count: int = 1, name: str = "points") -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ShapeError(f"{name} must have shape (n, {dim}), got {pts.shape}")
    if len(pts) < min_count:
        raise ValueError(f"{name} needs at least {min_count} rows, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise ValueError(f"{name} contains non-finite values")
    return pts
