"""Embed a tag map into video as alternating +/- lightness offsets in CIELAB."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .imaging import ColorSpace, ImagePlane, ParameterError, ShapeError, lab_to_rgb, resize_bilinear, rgb_to_lab
from .tagmap import TagMapImage
from .validation import check_mask, check_srgb


@dataclass(frozen=True, eq=False)
class ModulationConfig:
    mask: np.ndarray
    input_fps: float = 30.0
    output_fps: float = 60.0
    delta_l: float = 4.0
    out_width: int | None = None
    out_height: int | None = None

    def __post_init__(self):
        mask = check_mask(self.mask)
        object.__setattr__(self, "mask", mask)
        if self.out_width is None:
            object.__setattr__(self, "out_width", mask.shape[1])
        if self.out_height is None:
            object.__setattr__(self, "out_height", mask.shape[0])
        if self.delta_l < 0:
            raise ParameterError("delta_l must be >= 0")
        ratio = self.output_fps / self.input_fps
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
            raise ParameterError(f"output_fps/input_fps must be an integer >= 2, got {ratio:g}")
        if round(ratio) % 2:
            raise ParameterError(f"output_fps/input_fps must be even so the phases cancel, got {ratio:g}")

    @property
    def repeats(self) -> int:
        return int(round(self.output_fps / self.input_fps))


def modulate_lightness(L: np.ndarray, mask: np.ndarray, delta_l: float, n: int, phase: int = 1) -> np.ndarray:
    """Stack of ``n`` lightness planes (0-255 scale) with alternating offsets.

    Each plane is clamped to [0, 255] before the sign flips for the next one.
    """
    L = np.asarray(L, dtype=np.float64)
    offset = float(delta_l) * np.asarray(mask, dtype=np.float64)
    out = np.empty((n,) + L.shape)
    sign = 1.0 if phase >= 0 else -1.0
    for i in range(n):
        np.clip(L + sign * offset, 0.0, 255.0, out=out[i])
        sign = -sign
    return out


def _prepare(frame: ImagePlane, config: ModulationConfig) -> np.ndarray:
    check_srgb(frame)
    data = resize_bilinear(frame.data, config.out_width, config.out_height)
    if config.mask.shape != data.shape[:2]:
        raise ShapeError(f"mask shape {config.mask.shape} does not match output size {data.shape[:2]}")
    return rgb_to_lab(ImagePlane(data, ColorSpace.SRGB8), scale_l=True).data.astype(np.float64)


def modulate_frame(frame: ImagePlane, config: ModulationConfig, phase: int = 1) -> list[ImagePlane]:
    """Resize ``frame`` and return ``N = output_fps / input_fps`` modulated copies.

    Copy ``k`` carries ``(-1)**k * phase * delta_l * mask`` on the 0-255 L* scale.
    """
    lab = _prepare(frame, config)
    planes = modulate_lightness(lab[..., 0], config.mask, config.delta_l, config.repeats, phase)
    out = []
    for L in planes:
        lab[..., 0] = L
        out.append(lab_to_rgb(ImagePlane(lab, ColorSpace.LAB_F32), scaled_l=True))
    return out


def modulate_stream(frames: Iterable[ImagePlane], config: ModulationConfig, phase: int = 1) -> Iterator[ImagePlane]:
    """Modulate a frame stream; the sign alternates continuously across input frames."""
    empty = True
    for frame in frames:
        empty = False
        yield from modulate_frame(frame, config, phase)
        if config.repeats % 2:
            phase = -phase
    if empty:
        raise ValueError("modulate_stream needs at least one input frame")


class TagModulator(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` takes the tag map (or its mask), ``transform``
    maps a list of sRGB frames to the modulated high-rate stream."""

    def __init__(self, delta_l=4.0, input_fps=30.0, output_fps=60.0, out_width=None, out_height=None):
        self.delta_l = delta_l
        self.input_fps = input_fps
        self.output_fps = output_fps
        self.out_width = out_width
        self.out_height = out_height

    def fit(self, X, y=None):
        mask = X.mask if isinstance(X, TagMapImage) else X
        self.config_ = ModulationConfig(
            mask=mask,
            input_fps=self.input_fps,
            output_fps=self.output_fps,
            delta_l=self.delta_l,
            out_width=self.out_width,
            out_height=self.out_height,
        )
        self.n_repeats_ = self.config_.repeats
        return self

    def transform(self, X: Sequence[ImagePlane]) -> list[ImagePlane]:
        check_is_fitted(self, "config_")
        if isinstance(X, ImagePlane):
            X = [X]
        return list(modulate_stream(X, self.config_))
