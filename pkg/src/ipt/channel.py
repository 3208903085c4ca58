"""Simulated projector -> floor -> downward camera channel.

Stands in for the projector, the flying platform and its high-speed camera:
renders what a pinhole camera at a given pose sees of the projected screen
and corrupts the frames with motion, sensor noise and shadows. Ground-truth
poses come out alongside the frames.

Noise sigma and shadow attenuation act on L*; sigma is expressed on the
same 0-255 L* scale as the modulation depth.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import CameraIntrinsics, Pose, backproject_to_plane, body_from_euler, canonical_quaternion
from .imaging import ColorSpace, ImagePlane, lab_to_rgb, rgb_to_lab
from .validation import check_srgb


class DegenerateViewError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScreenGeometry:
    """Extents (meters) of the projected screen, centered on the world origin."""

    width_m: float
    height_m: float

    def ratios(self, width_px: int, height_px: int) -> tuple[float, float]:
        return self.width_m / width_px, self.height_m / height_px


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    position: tuple[float, float, float]
    quaternion: tuple[float, float, float, float]  # body attitude (w, x, y, z)

    @property
    def pose(self) -> Pose:
        return Pose.from_body(self.position, self.quaternion)


@dataclass(frozen=True)
class Shadow:
    polygon: tuple[tuple[float, float], ...]  # screen-image pixel vertices (x, y)
    attenuation: float = 0.0


@dataclass
class CaptureScenario:
    intrinsics: CameraIntrinsics
    screen: ScreenGeometry
    trajectory: list[TrajectorySample]
    camera_fps: float = 120.0
    noise_sigma: float = 0.0
    shadow: Shadow | None = None
    motion: list[tuple[int, int]] | None = None  # per-frame integer image shifts
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.trajectory:
            raise ScenarioError("scenario trajectory is empty")
        if self.camera_fps <= 0:
            raise ScenarioError("camera_fps must be positive")
        if self.noise_sigma < 0:
            raise ScenarioError("noise_sigma must be >= 0")
        if self.motion is not None and len(self.motion) != len(self.trajectory):
            raise ScenarioError("motion list must have one shift per trajectory sample")

    def to_dict(self) -> dict:
        d = {
            "intrinsics": self.intrinsics.to_dict(),
            "screen": {"width_m": self.screen.width_m, "height_m": self.screen.height_m},
            "trajectory": [
                {"t": s.t, "position": list(s.position), "quaternion": list(s.quaternion)} for s in self.trajectory
            ],
            "camera_fps": self.camera_fps,
            "noise_sigma": self.noise_sigma,
            "shadow": None
            if self.shadow is None
            else {"polygon": [list(p) for p in self.shadow.polygon], "attenuation": self.shadow.attenuation},
            "seed": self.seed,
        }
        if self.motion is not None:
            d["motion"] = [list(m) for m in self.motion]
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaptureScenario":
        try:
            shadow = d.get("shadow")
            scenario = cls(
                intrinsics=CameraIntrinsics.from_dict(d["intrinsics"]),
                screen=ScreenGeometry(float(d["screen"]["width_m"]), float(d["screen"]["height_m"])),
                trajectory=[
                    TrajectorySample(float(s["t"]), tuple(s["position"]), tuple(s["quaternion"]))
                    for s in d["trajectory"]
                ],
                camera_fps=float(d.get("camera_fps", 120.0)),
                noise_sigma=float(d.get("noise_sigma", 0.0)),
                shadow=None
                if not shadow
                else Shadow(tuple(tuple(p) for p in shadow["polygon"]), float(shadow.get("attenuation", 0.0))),
                motion=[tuple(int(v) for v in m) for m in d["motion"]] if d.get("motion") else None,
                seed=int(d.get("seed", 0)),
                meta=d.get("meta", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        scenario.validate()
        return scenario

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "CaptureScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- image formation --------------------------------------------------------


def _bilinear_gather(src: np.ndarray, rows: np.ndarray, cols: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Bilinear samples of ``src`` at fractional indices; black outside."""
    h, w = src.shape[:2]
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = (rows - r0).astype(np.float32)
    fc = (cols - c0).astype(np.float32)
    out = np.zeros(rows.shape + src.shape[2:], dtype=np.float32)
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc), (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr = r0 + dr
        cc = c0 + dc
        ok = valid & (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        vals = src[np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1)].astype(np.float32)
        wgt = np.where(ok, wgt, 0.0)
        out += vals * (wgt[..., None] if src.ndim == 3 else wgt)
    return out


def screen_sample_coords(xy: np.ndarray, geometry: ScreenGeometry, width_px: int, height_px: int):
    """Array (row, col) indices of world points on the screen image."""
    rx, ry = geometry.ratios(width_px, height_px)
    cols = xy[..., 0] / rx + width_px / 2.0 - 0.5
    rows = height_px / 2.0 - xy[..., 1] / ry - 0.5
    return rows, cols


def render_view(
    screen_frame: ImagePlane, geometry: ScreenGeometry, intr: CameraIntrinsics, pose: Pose
) -> ImagePlane:
    """Camera image of the planar screen (z = 0) seen from ``pose``."""
    c2w = pose.camera_to_world()
    if c2w.translation[2] <= 0:
        raise DegenerateViewError("camera must be above the screen plane")
    vv, uu = np.mgrid[0 : intr.height, 0 : intr.width].astype(np.float64)
    xy, hit = backproject_to_plane(intr, c2w, np.stack([uu, vv], axis=-1))
    if not hit.any():
        raise DegenerateViewError("no camera ray intersects the screen plane")
    src = screen_frame.data
    rows, cols = screen_sample_coords(xy, geometry, src.shape[1], src.shape[0])
    out = _bilinear_gather(src, rows, cols, hit)
    if src.dtype == np.uint8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    cs = screen_frame.color_space
    # interpolated edges are no longer two-valued
    return ImagePlane(out, ColorSpace.GRAY_U8 if cs is ColorSpace.BINARY else cs)


def apply_motion(frame: ImagePlane, shift: tuple[int, int]) -> ImagePlane:
    """Integer translation by (dx, dy) pixels, borders replicated."""
    dx, dy = int(shift[0]), int(shift[1])
    if (dx, dy) == (0, 0):
        return frame
    h, w = frame.data.shape[:2]
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return ImagePlane(frame.data[rows][:, cols], frame.color_space)


def apply_noise(frame: ImagePlane, sigma: float, seed=None) -> ImagePlane:
    """I.i.d. Gaussian noise on L* (0-255 scale), deterministic under ``seed``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return frame
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if frame.channels == 1:
        noisy = frame.data.astype(np.float32) + rng.normal(0.0, sigma, frame.data.shape).astype(np.float32)
        return ImagePlane(np.clip(np.rint(noisy), 0, 255).astype(np.uint8), frame.color_space)
    check_srgb(frame)
    lab = rgb_to_lab(frame, scale_l=True).data
    lab[..., 0] = np.clip(lab[..., 0] + rng.normal(0.0, sigma, lab.shape[:2]).astype(np.float32), 0.0, 255.0)
    return lab_to_rgb(ImagePlane(lab, ColorSpace.LAB_F32), scaled_l=True)


def polygon_mask(polygon, height: int, width: int) -> np.ndarray:
    """Even-odd rule fill of pixel centers inside a polygon given as (x, y) vertices."""
    poly = np.asarray(polygon, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise ValueError("a polygon needs at least 3 (x, y) vertices")
    x0, y0 = np.floor(poly.min(axis=0)).astype(int)
    x1, y1 = np.ceil(poly.max(axis=0)).astype(int)
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width - 1), min(y1, height - 1)
    mask = np.zeros((height, width), dtype=bool)
    if x1 < x0 or y1 < y0:
        return mask
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1].astype(np.float64)
    inside = np.zeros(xx.shape, dtype=bool)
    for (xa, ya), (xb, yb) in zip(poly, np.roll(poly, -1, axis=0)):
        crosses = (ya > yy) != (yb > yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = xa + (yy - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (xx < x_at)
    mask[y0 : y1 + 1, x0 : x1 + 1] = inside
    return mask


def apply_shadow(frame: ImagePlane, polygon, attenuation: float) -> ImagePlane:
    """Multiply L* by ``attenuation`` inside ``polygon``."""
    if not 0.0 <= attenuation <= 1.0:
        raise ValueError("attenuation must lie in [0, 1]")
    inside = polygon_mask(polygon, frame.height, frame.width)
    if attenuation == 1.0 or not inside.any():
        return frame
    if frame.channels == 1:
        data = frame.data.copy()
        data[inside] = np.rint(data[inside] * attenuation).astype(data.dtype)
        return ImagePlane(data, frame.color_space)
    ys, xs = np.nonzero(inside)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    crop = ImagePlane(frame.data[y0:y1, x0:x1], ColorSpace.SRGB8)
    lab = rgb_to_lab(crop).data
    sub = inside[y0:y1, x0:x1]
    lab[..., 0] = np.where(sub, lab[..., 0] * attenuation, lab[..., 0])
    # pure black keeps no chroma
    if attenuation == 0.0:
        lab[..., 1:] = np.where(sub[..., None], 0.0, lab[..., 1:])
    out = frame.data.copy()
    out[y0:y1, x0:x1] = lab_to_rgb(ImagePlane(lab, ColorSpace.LAB_F32)).data
    return ImagePlane(out, ColorSpace.SRGB8)


def _capture_one(k: int, scenario: CaptureScenario, screen: ImagePlane) -> ImagePlane:
    frame = render_view(screen, scenario.screen, scenario.intrinsics, scenario.trajectory[k].pose)
    if scenario.motion is not None:
        frame = apply_motion(frame, scenario.motion[k])
    if scenario.noise_sigma > 0:
        frame = apply_noise(frame, scenario.noise_sigma, np.random.default_rng([scenario.seed, k]))
    return frame


def simulate_capture(
    scenario: CaptureScenario, modulated: Sequence[ImagePlane], n_jobs: int = 1
) -> tuple[list[ImagePlane], list[TrajectorySample]]:
    """Render one camera frame per trajectory sample.

    Camera frame ``k`` sees projected frame ``k`` (looping over
    ``modulated``), i.e. the camera is synchronised with the projector and
    samples every projected frame exactly once. Per-frame noise streams are
    derived from ``(seed, k)`` so results do not depend on ``n_jobs``.
    """
    scenario.validate()
    if not modulated:
        raise ScenarioError("no projected frames to capture")
    shadowed: dict[int, ImagePlane] = {}

    def screen_for(k: int) -> ImagePlane:
        idx = k % len(modulated)
        if idx not in shadowed:
            frame = modulated[idx]
            if scenario.shadow is not None:
                frame = apply_shadow(frame, scenario.shadow.polygon, scenario.shadow.attenuation)
            shadowed[idx] = frame
        return shadowed[idx]

    n = len(scenario.trajectory)
    screens = [screen_for(k) for k in range(n)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            frames = list(pool.map(lambda k: _capture_one(k, scenario, screens[k]), range(n)))
    else:
        frames = [_capture_one(k, scenario, screens[k]) for k in range(n)]
    return frames, list(scenario.trajectory)


# --- ground truth files -----------------------------------------------------


GT_FIELDS = ("t", "x", "y", "z", "qw", "qx", "qy", "qz")


def write_ground_truth(samples: Sequence[TrajectorySample], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GT_FIELDS)
        for s in samples:
            writer.writerow([repr(float(v)) for v in (s.t, *s.position, *s.quaternion)])


def read_ground_truth(path) -> list[TrajectorySample]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TrajectorySample(
            float(r["t"]),
            (float(r["x"]), float(r["y"]), float(r["z"])),
            (float(r["qw"]), float(r["qx"]), float(r["qy"]), float(r["qz"])),
        )
        for r in rows
    ]


# --- scenario builders ------------------------------------------------------


def _quat(yaw: float, pitch: float, roll: float) -> tuple[float, float, float, float]:
    from scipy.spatial.transform import Rotation

    q = Rotation.from_matrix(body_from_euler(yaw, pitch, roll)).as_quat(scalar_first=True)
    return tuple(float(v) for v in canonical_quaternion(q))


def static_scenario(
    intr: CameraIntrinsics,
    screen: ScreenGeometry,
    position=(0.0, 0.0, 1.0),
    yaw: float = 0.0,
    n_frames: int = 2,
    camera_fps: float = 120.0,
    **kwargs,
) -> CaptureScenario:
    q = _quat(yaw, 0.0, 0.0)
    traj = [TrajectorySample(k / camera_fps, tuple(float(p) for p in position), q) for k in range(n_frames)]
    return CaptureScenario(intr, screen, traj, camera_fps=camera_fps, **kwargs)


def full_view_intrinsics(screen: ScreenGeometry, width: int, height: int, altitude: float) -> CameraIntrinsics:
    """Intrinsics of a nadir camera at ``altitude`` whose image exactly covers the screen."""
    fx = width * altitude / screen.width_m
    fy = height * altitude / screen.height_m
    return CameraIntrinsics(fx, fy, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def flight_scenario(
    intr: CameraIntrinsics,
    screen: ScreenGeometry,
    n_frames: int = 120,
    camera_fps: float = 120.0,
    altitude: float = 0.8,
    extent: tuple[float, float] = (0.45, 0.5),
    period: float = 4.0,
    wobble_deg: float = 1.5,
    wobble_hz: float = 2.5,
    yaw_deg: float = 8.0,
    seed: int = 0,
    **kwargs,
) -> CaptureScenario:
    """A smooth figure-eight flight with attitude wobble at roughly constant altitude."""
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0, 2 * np.pi, size=5)
    traj = []
    w = 2 * np.pi / period
    for k in range(n_frames):
        t = k / camera_fps
        x = extent[0] * np.sin(w * t + phases[0])
        y = extent[1] * np.sin(2 * w * t + phases[1])
        z = altitude + 0.03 * np.sin(0.5 * w * t + phases[2])
        yaw = yaw_deg * np.sin(0.5 * w * t)
        pitch = wobble_deg * np.sin(2 * np.pi * wobble_hz * t + phases[3])
        roll = wobble_deg * np.sin(2 * np.pi * wobble_hz * 1.3 * t + phases[4])
        traj.append(TrajectorySample(t, (float(x), float(y), float(z)), _quat(yaw, pitch, roll)))
    return CaptureScenario(intr, screen, traj, camera_fps=camera_fps, seed=seed, **kwargs)


def synthetic_background(width: int, height: int, seed: int = 0) -> ImagePlane:
    """Map-like video content: pale ground, colored blocks, roads and label strokes."""
    rng = np.random.default_rng(seed)
    img = np.empty((height, width, 3), dtype=np.float32)
    img[:] = (222, 216, 200)
    scale = max(width, height)
    for _ in range(40):
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        w, h = rng.uniform(0.03, 0.15, size=2) * scale
        color = rng.choice([(196, 222, 186), (176, 206, 230), (235, 226, 212), (210, 200, 190)])
        img[int(y) : int(y + h), int(x) : int(x + w)] = color
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    for _ in range(14):
        p = rng.uniform(0, 1, size=2) * (width, height)
        ang = rng.uniform(0, np.pi)
        d = np.abs((xx - p[0]) * np.sin(ang) - (yy - p[1]) * np.cos(ang))
        half = rng.uniform(0.004, 0.012) * scale
        color = rng.choice([(250, 250, 250), (246, 214, 140), (170, 170, 175)])
        img[d < half] = color
    for _ in range(60):
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        w, h = rng.uniform(0.01, 0.04) * scale, rng.uniform(0.002, 0.005) * scale
        img[int(y) : int(y + h), int(x) : int(x + w)] = (90, 90, 100)
    img = ndimage.gaussian_filter(img, sigma=(1.5, 1.5, 0))
    return ImagePlane(np.clip(np.rint(img), 0, 255).astype(np.uint8), ColorSpace.SRGB8)


def shadow_over_tag(config, tag_id: int, margin_cells: int = 2, attenuation: float = 0.0) -> Shadow:
    """Rectangular shadow covering one placed tag plus a margin, in screen pixels."""
    x0, y0 = config.tag_origin(tag_id)
    q = margin_cells * config.cell
    x1, y1 = x0 + config.tag_side + q, y0 + config.tag_side + q
    x0, y0 = x0 - q, y0 - q
    return Shadow(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), attenuation)
