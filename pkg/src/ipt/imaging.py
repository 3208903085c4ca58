"""Raster container, sRGB <-> CIELAB conversion and the small set of image
operators used by the modulation and demodulation pipelines.

Pixel coordinates follow the pixel-center convention everywhere in the
package: pixel ``(row, col)`` covers ``[col - 0.5, col + 0.5] x
[row - 0.5, row + 0.5]`` in continuous image coordinates ``(u, v)``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

# D65 reference white, CIE 1931 2-degree observer.
D65_WHITE = np.array([0.95047, 1.0, 1.08883])

_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

_DELTA = 6.0 / 29.0
L_SCALE = 255.0 / 100.0


class ShapeError(ValueError):
    """Raised when an image has the wrong number of channels or size."""


class ParameterError(ValueError):
    """Raised for invalid operator parameters (kernel sizes, empty inputs)."""


class ColorSpace(str, enum.Enum):
    SRGB8 = "SRGB8"
    LAB_F32 = "LAB_F32"
    GRAY_U8 = "GRAY_U8"
    BINARY = "BINARY"


class MorphOp(str, enum.Enum):
    OPEN = "OPEN"
    CLOSE = "CLOSE"


@dataclass(frozen=True)
class ImagePlane:
    """A raster with an explicit color-space tag.

    ``data`` is a row-major ndarray of shape ``(height, width)`` or
    ``(height, width, 3)``.
    """

    data: np.ndarray
    color_space: ColorSpace

    def __post_init__(self):
        data = np.asarray(self.data)
        cs = ColorSpace(self.color_space)
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise ShapeError(f"expected (h, w) or (h, w, 3) data, got {data.shape}")
        if cs in (ColorSpace.SRGB8, ColorSpace.LAB_F32) and data.ndim != 3:
            raise ShapeError(f"{cs.value} requires 3 channels")
        if cs in (ColorSpace.GRAY_U8, ColorSpace.BINARY) and data.ndim != 2:
            raise ShapeError(f"{cs.value} requires 1 channel")
        if cs is ColorSpace.SRGB8:
            data = data.astype(np.uint8, copy=False)
        elif cs is ColorSpace.BINARY:
            data = np.where(data > 0, 255, 0).astype(np.uint8)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "color_space", cs)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @classmethod
    def gray(cls, data) -> "ImagePlane":
        return cls(np.asarray(data), ColorSpace.GRAY_U8)

    @classmethod
    def binary(cls, data) -> "ImagePlane":
        return cls(np.asarray(data), ColorSpace.BINARY)

    @classmethod
    def srgb(cls, data) -> "ImagePlane":
        return cls(np.asarray(data), ColorSpace.SRGB8)


def _srgb_decode(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_encode(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1 / 2.4) - 0.055)


_LINEAR_LUT = _srgb_decode(np.arange(256) / 255.0)


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(img: ImagePlane, scale_l: bool = False) -> ImagePlane:
    """Convert an sRGB image to CIELAB (D65).

    With ``scale_l`` the L* channel is rescaled from [0, 100] to [0, 255],
    the working scale of the modulation arithmetic.
    """
    if img.channels != 3 or img.color_space is not ColorSpace.SRGB8:
        raise ShapeError("rgb_to_lab expects a 3-channel SRGB8 image")
    lin = _LINEAR_LUT[img.data]
    xyz = lin @ _RGB_TO_XYZ.T / D65_WHITE
    fx, fy, fz = (_f(xyz[..., i]) for i in range(3))
    lab = np.empty(img.data.shape, dtype=np.float32)
    lab[..., 0] = 116.0 * fy - 16.0
    lab[..., 1] = 500.0 * (fx - fy)
    lab[..., 2] = 200.0 * (fy - fz)
    if scale_l:
        lab[..., 0] *= L_SCALE
    return ImagePlane(lab, ColorSpace.LAB_F32)


def lab_to_rgb(img: ImagePlane, scaled_l: bool = False) -> ImagePlane:
    """Inverse of :func:`rgb_to_lab`; out-of-gamut values are clamped."""
    if img.channels != 3:
        raise ShapeError("lab_to_rgb expects a 3-channel image")
    lab = img.data.astype(np.float64)
    L = lab[..., 0] / L_SCALE if scaled_l else lab[..., 0]
    fy = (L + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * D65_WHITE
    rgb = _srgb_encode(xyz @ _XYZ_TO_RGB.T)
    return ImagePlane(np.rint(rgb * 255.0).astype(np.uint8), ColorSpace.SRGB8)


def lightness(img: ImagePlane, scale_l: bool = True) -> np.ndarray:
    """L* channel of an sRGB image as float32, on the 0-255 scale by default.

    Cheaper than a full :func:`rgb_to_lab` since L* depends on Y only.
    """
    if img.channels != 3:
        raise ShapeError("lightness expects a 3-channel SRGB8 image")
    lin = _LINEAR_LUT.astype(np.float32)[img.data]
    y = lin @ _RGB_TO_XYZ[1].astype(np.float32)
    L = 116.0 * _f(y) - 16.0
    if scale_l:
        L = L * L_SCALE
    return L.astype(np.float32)


def _odd_kernel(kernel: int) -> int:
    kernel = int(kernel)
    if kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"kernel must be a positive odd integer, got {kernel}")
    return kernel


def mean_filter(img: ImagePlane, kernel: int = 3) -> ImagePlane:
    """Box average with edge replication."""
    kernel = _odd_kernel(kernel)
    if img.channels != 1:
        raise ShapeError("mean_filter expects a single-channel image")
    if kernel == 1:
        return img
    out = ndimage.uniform_filter(img.data.astype(np.float32), size=kernel, mode="nearest")
    if img.data.dtype == np.uint8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return ImagePlane(out, ColorSpace.GRAY_U8)


def median(img: ImagePlane):
    """Lower median of the pixel multiset."""
    flat = np.asarray(img.data).ravel()
    if flat.size == 0:
        raise ParameterError("median of an empty image")
    k = (flat.size - 1) // 2
    return np.partition(flat, k)[k]


def threshold_binary(img: ImagePlane, t) -> ImagePlane:
    """Pixels strictly above ``t`` become 255, the rest 0."""
    if img.channels != 1:
        raise ShapeError("threshold_binary expects a single-channel image")
    return ImagePlane(np.where(img.data > t, 255, 0).astype(np.uint8), ColorSpace.BINARY)


def morphology(img: ImagePlane, op: MorphOp | str, kernel: int = 3) -> ImagePlane:
    """Binary opening (erode, then dilate) or closing (dilate, then erode)
    with a square structuring element; borders are replicated."""
    kernel = _odd_kernel(kernel)
    if img.channels != 1 or not np.isin(img.data, (0, 255)).all():
        raise ShapeError("morphology expects a binary image")
    op = MorphOp(op)
    data = img.data
    if kernel > 1:
        size = (kernel, kernel)
        erode = lambda a: ndimage.grey_erosion(a, size=size, mode="nearest")  # noqa: E731
        dilate = lambda a: ndimage.grey_dilation(a, size=size, mode="nearest")  # noqa: E731
        data = dilate(erode(data)) if op is MorphOp.OPEN else erode(dilate(data))
    return ImagePlane(data, ColorSpace.BINARY)


def resize_bilinear(data: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and edge replication."""
    h, w = data.shape[:2]
    if (h, w) == (height, width):
        return data.copy()
    rows = (np.arange(height) + 0.5) * (h / height) - 0.5
    cols = (np.arange(width) + 0.5) * (w / width) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    src = data.astype(np.float32)
    if data.ndim == 2:
        out = ndimage.map_coordinates(src, [rr, cc], order=1, mode="nearest")
    else:
        out = np.stack(
            [ndimage.map_coordinates(src[..., c], [rr, cc], order=1, mode="nearest") for c in range(data.shape[2])],
            axis=-1,
        )
    if data.dtype == np.uint8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


# --- file I/O -------------------------------------------------------------


def write_png(img: ImagePlane, path) -> None:
    if img.color_space is ColorSpace.LAB_F32:
        raise ShapeError("only SRGB8, GRAY_U8 and BINARY images can be written as PNG")
    Image.fromarray(np.ascontiguousarray(img.data.astype(np.uint8))).save(path, format="PNG")


def read_png(path, color_space: ColorSpace | str | None = None) -> ImagePlane:
    pil = Image.open(path)
    if color_space is None:
        color_space = ColorSpace.GRAY_U8 if pil.mode in ("L", "1") else ColorSpace.SRGB8
    color_space = ColorSpace(color_space)
    mode = "RGB" if color_space is ColorSpace.SRGB8 else "L"
    return ImagePlane(np.asarray(pil.convert(mode)), color_space)


MANIFEST_NAME = "manifest.json"


def write_sequence(frames: Sequence[ImagePlane], directory, fps: float) -> Path:
    """Write frames as zero-padded numbered PNGs plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames = list(frames)
    if not frames:
        raise ParameterError("cannot write an empty frame sequence")
    digits = max(6, len(str(len(frames))))
    for i, frame in enumerate(frames):
        write_png(frame, directory / f"{i:0{digits}d}.png")
    manifest = {
        "fps": fps,
        "width": frames[0].width,
        "height": frames[0].height,
        "frame_count": len(frames),
        "color_space": frames[0].color_space.value,
        "digits": digits,
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    manifest = json.loads(path.read_text())
    for key in ("fps", "width", "height", "frame_count", "color_space"):
        if key not in manifest:
            raise ParameterError(f"manifest {path} missing {key!r}")
    manifest["_dir"] = str(path.parent)
    return manifest


def iter_sequence(path) -> Iterable[ImagePlane]:
    manifest = read_manifest(path)
    directory = Path(manifest["_dir"])
    digits = manifest.get("digits", 6)
    for i in range(manifest["frame_count"]):
        yield read_png(directory / f"{i:0{digits}d}.png", manifest["color_space"])


def read_sequence(path) -> tuple[list[ImagePlane], dict]:
    manifest = read_manifest(path)
    return list(iter_sequence(path)), manifest
