"""Recover hidden tags from two successive camera frames.

Pipeline per frame pair: L* of both frames, a shift estimate from a few
sampled columns and rows, aligned subtraction, normalization around 128,
mean filter, median threshold, OPEN then CLOSE, and tag detection on the
binary image and its inverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .detector import detect_tags
from .imaging import (
    ColorSpace,
    ImagePlane,
    MorphOp,
    ParameterError,
    lightness,
    mean_filter,
    median,
    morphology,
    threshold_binary,
)
from .tagmap import TagMapConfig, UnknownTagError, lookup_world_corners
from .validation import check_gray, check_srgb

MIDPOINT = 128


@dataclass(frozen=True)
class AlignmentConfig:
    b: int = 5
    n_samples: int = 3
    # "coupled": each sampled line is also searched over the cross-axis offset;
    # "independent": two plain 1-D searches on fixed lines
    mode: str = "coupled"
    normalize: bool = False

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 0:
            raise ParameterError(f"b must be a nonnegative integer, got {self.b}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ParameterError(f"n_samples must be a positive integer, got {self.n_samples}")
        if self.mode not in ("coupled", "independent"):
            raise ParameterError(f"unknown alignment mode {self.mode!r}")


def _search_order(b: int) -> np.ndarray:
    # 0, -1, 1, -2, 2, ... so that argmin's first hit follows the tie rule
    out = [0]
    for m in range(1, b + 1):
        out += [-m, m]
    return np.array(out)


def _line_costs(pre: np.ndarray, now: np.ndarray, m: int, normalize: bool) -> np.ndarray:
    """L1 distance along axis 0 with ``now[i + m] ~ pre[i]``, summed over the
    trailing sample axis; leading axes of ``now`` beyond ``pre`` are kept."""
    n = pre.shape[0]
    if m >= 0:
        p, c = pre[: n - m], now[m:]
    else:
        p, c = pre[-m:], now[: n + m]
    if c.ndim == 3:
        p = p[:, None, :]
    d = np.abs(p - c).sum(axis=(0, -1))
    if normalize:
        d = d / (n - abs(m))
    return d


def _axis_shift(pre: np.ndarray, now: np.ndarray, lines: np.ndarray, b: int, cfg) -> int:
    """Shift along axis 0 of ``pre``/``now`` estimated from the sampled
    ``lines`` (indices along axis 1)."""
    order = _search_order(b)
    pre_lines = pre[:, lines]
    if cfg.mode == "independent":
        now_lines = now[:, lines]
    else:
        idx = np.clip(lines[None, :] + order[:, None], 0, now.shape[1] - 1)
        now_lines = now[:, idx]  # (n, offsets, lines)
    best_m, best = 0, np.inf
    for m in order:
        c = float(np.min(_line_costs(pre_lines, now_lines, int(m), cfg.normalize)))
        if c < best:
            best_m, best = int(m), c
    return best_m


def sample_positions(length: int, n: int) -> np.ndarray:
    """``n`` equally spaced interior indices along an axis of ``length``."""
    return np.array([(i + 1) * length // (n + 1) for i in range(n)])


def estimate_shift(prev, now, cfg: AlignmentConfig | None = None) -> tuple[int, int]:
    """Integer translation ``(m_x, m_y)`` with ``now[r + m_y, c + m_x] ~ prev[r, c]``.

    ``m_y`` minimizes the L1 distance between ``n_samples`` equally spaced
    columns of the two frames over ``|m_y| <= b``; ``m_x`` does the same with
    sampled rows. In the default coupled mode each column of ``now`` is also
    allowed a horizontal offset (and each row a vertical one), so a diagonal
    motion does not compare misregistered lines. Ties go to the smaller
    ``|m|`` and then to the negative value.
    """
    cfg = cfg or AlignmentConfig()
    pre = check_gray(prev).astype(np.float32, copy=False)
    cur = check_gray(now).astype(np.float32, copy=False)
    if pre.shape != cur.shape:
        raise ParameterError(f"frame sizes differ: {pre.shape} vs {cur.shape}")
    h, w = pre.shape
    b = int(cfg.b)
    if h < 2 * b + 1 or w < 2 * b + 1:
        raise ParameterError(f"frames of {w}x{h} are too small for b = {b}")
    my = _axis_shift(pre, cur, sample_positions(w, cfg.n_samples), b, cfg)
    mx = _axis_shift(pre.T, cur.T, sample_positions(h, cfg.n_samples), b, cfg)
    return mx, my


def exhaustive_shift(prev, now, b: int = 5) -> tuple[int, int]:
    """Joint search over all ``|m_x|, |m_y| <= b`` using mean L1 on the full overlap."""
    pre = check_gray(prev).astype(np.float64)
    cur = check_gray(now).astype(np.float64)
    h, w = pre.shape
    best, best_cost = (0, 0), np.inf
    order = _search_order(b)
    for my in order:
        for mx in order:
            p = pre[max(0, -my) : h - max(0, my), max(0, -mx) : w - max(0, mx)]
            c = cur[max(0, my) : h - max(0, -my), max(0, mx) : w - max(0, -mx)]
            cost = np.abs(p - c).mean()
            if cost < best_cost:
                best, best_cost = (mx, my), cost
    return best


def signed_difference(prev, now, shift: tuple[int, int]) -> np.ndarray:
    """``now`` aligned onto ``prev`` minus ``prev``; zero where the shift leaves no overlap."""
    pre = check_gray(prev).astype(np.float32)
    cur = check_gray(now).astype(np.float32)
    h, w = pre.shape
    mx, my = int(shift[0]), int(shift[1])
    diff = np.zeros((h, w), dtype=np.float32)
    if abs(mx) >= w or abs(my) >= h:
        return diff
    r0, r1 = max(0, -my), h - max(0, my)
    c0, c1 = max(0, -mx), w - max(0, mx)
    diff[r0:r1, c0:c1] = cur[r0 + my : r1 + my, c0 + mx : c1 + mx] - pre[r0:r1, c0:c1]
    return diff


def normalize_difference(diff: np.ndarray) -> ImagePlane:
    """Linear map of a signed difference to uint8 with zero at 128 and the
    largest magnitude at 1 or 255."""
    peak = float(np.abs(diff).max()) if diff.size else 0.0
    if peak == 0.0:
        return ImagePlane(np.full(diff.shape, MIDPOINT, dtype=np.uint8), ColorSpace.GRAY_U8)
    out = MIDPOINT + diff * (127.0 / peak)
    return ImagePlane(np.clip(np.rint(out), 0, 255).astype(np.uint8), ColorSpace.GRAY_U8)


def align_subtract(prev, now, shift: tuple[int, int]) -> ImagePlane:
    """Normalized aligned difference; the band uncovered by the shift reads 128."""
    return normalize_difference(signed_difference(prev, now, shift))


@dataclass(frozen=True)
class PreprocessKnobs:
    mean_kernel: int = 3
    open_kernel: int = 3
    close_kernel: int = 5


def preprocess(diff: ImagePlane, knobs: PreprocessKnobs | None = None) -> ImagePlane:
    """Mean filter, threshold at the median, OPEN, then CLOSE."""
    knobs = knobs or PreprocessKnobs()
    if not isinstance(diff, ImagePlane):
        diff = ImagePlane(check_gray(diff), ColorSpace.GRAY_U8)
    smooth = mean_filter(diff, knobs.mean_kernel)
    binary = threshold_binary(smooth, median(smooth))
    binary = morphology(binary, MorphOp.OPEN, knobs.open_kernel)
    return morphology(binary, MorphOp.CLOSE, knobs.close_kernel)


@dataclass(frozen=True, eq=False)
class DetectionResult:
    id: int
    p_i: np.ndarray  # (4, 2) pixel corners, BL, BR, TR, TL of the tag
    hamming: int
    p_w: np.ndarray  # (4, 3) world corners in the same order

    def to_dict(self) -> dict:
        return {
            "id": int(self.id),
            "p_i": np.asarray(self.p_i, dtype=float).tolist(),
            "hamming": int(self.hamming),
            "p_w": np.asarray(self.p_w, dtype=float).tolist(),
        }


def detect_both_polarities(binary: ImagePlane, map_config: TagMapConfig, max_correction: int = 2, min_area: float = 64.0):
    """Detections on ``binary`` and on its inverse, one per id (lower hamming wins)."""
    family = map_config.family
    found = {}
    for img in (binary.data, 255 - binary.data):
        for det in detect_tags(img, family, min_area=min_area, max_correction=max_correction):
            prev = found.get(det.id)
            if prev is None or det.hamming < prev.hamming:
                found[det.id] = det
    out = []
    for tag_id in sorted(found):
        det = found[tag_id]
        try:
            p_w = lookup_world_corners(tag_id, map_config)
        except UnknownTagError:
            continue
        out.append(DetectionResult(tag_id, det.corners, det.hamming, p_w))
    return out


@dataclass(eq=False)
class DemodState:
    """Per-stream state; holds the previous frame's L* plane."""

    align: AlignmentConfig = field(default_factory=AlignmentConfig)
    knobs: PreprocessKnobs = field(default_factory=PreprocessKnobs)
    max_correction: int = 2
    min_area: float = 64.0
    prev_lightness: np.ndarray | None = None
    last_shift: tuple[int, int] | None = None
    last_binary: ImagePlane | None = None

    @property
    def ready(self) -> bool:
        return self.prev_lightness is not None

    def reset(self) -> None:
        self.prev_lightness = None
        self.last_shift = None
        self.last_binary = None


def demodulate(state: DemodState, now: ImagePlane, map_config: TagMapConfig) -> list[DetectionResult] | None:
    """Detections in the previous frame's pixel coordinates.

    Returns ``None`` on the first call (state primed, nothing to compare),
    otherwise a possibly empty list. ``state`` is updated with ``now``.
    """
    L_now = lightness(check_srgb(now))
    if state.prev_lightness is None:
        state.prev_lightness = L_now
        return None
    L_pre = state.prev_lightness
    if L_pre.shape != L_now.shape:
        raise ParameterError(f"frame size changed from {L_pre.shape} to {L_now.shape}")
    shift = estimate_shift(L_pre, L_now, state.align)
    binary = preprocess(align_subtract(L_pre, L_now, shift), state.knobs)
    results = detect_both_polarities(binary, map_config, state.max_correction, state.min_area)
    state.prev_lightness = L_now
    state.last_shift = shift
    state.last_binary = binary
    return results


class TagDemodulator(BaseEstimator):
    """Estimator front end: ``fit`` takes the map configuration, ``predict``
    maps a frame sequence to one detection list per consecutive pair."""

    def __init__(
        self, b=5, n_samples=3, mode="coupled", normalize=False, mean_kernel=3, open_kernel=3, close_kernel=5, max_correction=2
    ):
        self.b = b
        self.n_samples = n_samples
        self.mode = mode
        self.normalize = normalize
        self.mean_kernel = mean_kernel
        self.open_kernel = open_kernel
        self.close_kernel = close_kernel
        self.max_correction = max_correction

    def fit(self, X: TagMapConfig, y=None):
        X.validate()
        self.map_config_ = X
        self.align_ = AlignmentConfig(self.b, self.n_samples, self.mode, self.normalize)
        self.knobs_ = PreprocessKnobs(self.mean_kernel, self.open_kernel, self.close_kernel)
        return self

    def new_state(self) -> DemodState:
        return DemodState(self.align_, self.knobs_, self.max_correction)

    def predict(self, X) -> list[list[DetectionResult]]:
        state = self.new_state()
        out = []
        for frame in X:
            res = demodulate(state, frame, self.map_config_)
            if res is not None:
                out.append(res)
        return out
