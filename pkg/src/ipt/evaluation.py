"""End-to-end evaluation against simulator ground truth, and the throughput bench."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .channel import CaptureScenario, ScenarioError, TrajectorySample, simulate_capture, synthetic_background
from .demodulator import AlignmentConfig, DemodState, PreprocessKnobs, demodulate
from .geometry import CameraIntrinsics, euler_zyx
from .imaging import ImagePlane
from .modulator import ModulationConfig, modulate_frame
from .pose import DegeneracyError, NoValidPoseError, PnpInput, WorldPose, invert_pose, solve_planar_pnp
from .tagmap import TagMapConfig, TagMapImage

AXES = ("x", "y", "z", "yaw", "pitch", "roll")


@dataclass
class EvalReport:
    mae: dict  # per axis; meters for x, y, z and degrees for angles
    std: dict  # standard deviation of the signed error, same units
    detection_rate: float
    mean_tags: float
    fps: float
    n_pairs: int
    n_poses: int
    scenario: dict = field(default_factory=dict)

    @property
    def horizontal_mae(self) -> float:
        return float(np.hypot(self.mae["x"], self.mae["y"]))

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        """Aligned text table of MAE / STD per axis plus the summary numbers."""
        lines = [f"{'axis':<6}{'mae':>12}{'std':>12}  unit"]
        for a in AXES:
            unit = "m" if a in "xyz" else "deg"
            lines.append(f"{a:<6}{self.mae[a]:>12.5f}{self.std[a]:>12.5f}  {unit}")
        lines.append(f"{'detection rate':<22}{self.detection_rate:>8.3f}")
        lines.append(f"{'mean tags/frame':<22}{self.mean_tags:>8.2f}")
        lines.append(f"{'throughput (fps)':<22}{self.fps:>8.1f}")
        lines.append(f"{'frame pairs':<22}{self.n_pairs:>8d}")
        lines.append(f"{'poses':<22}{self.n_poses:>8d}")
        return "\n".join(lines)


@dataclass
class FrameRecord:
    frame: int
    t: float
    n_tags: int
    shift: tuple[int, int]
    speed: float  # ground-truth horizontal speed, m/s
    ids: list = field(default_factory=list)
    estimate: WorldPose | None = None
    rmse: float = float("nan")
    error: np.ndarray | None = None  # x, y, z (m), yaw, pitch, roll (deg)


def check_compatible(scenario: CaptureScenario, config: TagMapConfig, rel: float = 1e-6) -> None:
    rx, ry = scenario.screen.ratios(config.map_width, config.map_height)
    if abs(rx - config.ratio_x) > rel * config.ratio_x or abs(ry - config.ratio_y) > rel * config.ratio_y:
        raise ScenarioError(
            f"screen extents give ratios ({rx:.6g}, {ry:.6g}) m/px but the map uses "
            f"({config.ratio_x:.6g}, {config.ratio_y:.6g})"
        )


def _wrap(deg: np.ndarray) -> np.ndarray:
    return (np.asarray(deg) + 180.0) % 360.0 - 180.0


def pose_error(est: WorldPose, truth: TrajectorySample) -> np.ndarray:
    gt_pose = truth.pose
    gt_angles = np.array(euler_zyx(gt_pose.body_rotation()))
    est_angles = np.array([est.yaw, est.pitch, est.roll])
    return np.r_[est.translation - np.asarray(truth.position), _wrap(est_angles - gt_angles)]


def _speeds(trajectory: Sequence[TrajectorySample]) -> np.ndarray:
    if len(trajectory) < 2:
        return np.zeros(len(trajectory))
    t = np.array([s.t for s in trajectory])
    p = np.array([s.position for s in trajectory])[:, :2]
    v = np.gradient(p, t, axis=0)
    return np.linalg.norm(v, axis=1)


def estimate_pose(results, intrinsics: CameraIntrinsics):
    """Pose from all detections of one frame pair, or ``None``."""
    if not results:
        return None
    p_i = np.concatenate([r.p_i for r in results])
    p_w = np.concatenate([r.p_w for r in results])
    try:
        pose, rmse = solve_planar_pnp(PnpInput(p_i, p_w, intrinsics))
    except (DegeneracyError, NoValidPoseError):
        return None
    return invert_pose(pose), rmse


def evaluate_frames(
    frames: Sequence[ImagePlane],
    trajectory: Sequence[TrajectorySample],
    intrinsics: CameraIntrinsics,
    config: TagMapConfig,
    state: DemodState | None = None,
) -> tuple[list[FrameRecord], float]:
    """Demodulate consecutive pairs and solve poses.

    Detections live in the earlier frame's pixel grid, so each pair is scored
    against that frame's ground truth. Returns per-pair records and the mean
    demodulate+pose rate in frames per second.
    """
    state = state or DemodState()
    speeds = _speeds(trajectory)
    records = []
    elapsed = 0.0
    for k, frame in enumerate(frames):
        t0 = time.perf_counter()
        results = demodulate(state, frame, config)
        if results is None:
            continue
        est = estimate_pose(results, intrinsics)
        elapsed += time.perf_counter() - t0
        truth = trajectory[k - 1]
        rec = FrameRecord(k - 1, truth.t, len(results), state.last_shift, float(speeds[k - 1]), [r.id for r in results])
        if est is not None:
            rec.estimate, rec.rmse = est
            rec.error = pose_error(rec.estimate, truth)
        records.append(rec)
    fps = len(records) / elapsed if elapsed > 0 else float("inf")
    return records, fps


def summarize(records: Sequence[FrameRecord], fps: float, scenario: dict | None = None) -> EvalReport:
    errs = np.array([r.error for r in records if r.error is not None]).reshape(-1, 6)
    n = len(records)
    if len(errs):
        mae = dict(zip(AXES, np.abs(errs).mean(axis=0).tolist()))
        std = dict(zip(AXES, errs.std(axis=0).tolist()))
    else:
        mae = dict.fromkeys(AXES, float("nan"))
        std = dict.fromkeys(AXES, float("nan"))
    return EvalReport(
        mae=mae,
        std=std,
        detection_rate=sum(r.n_tags > 0 for r in records) / n if n else 0.0,
        mean_tags=float(np.mean([r.n_tags for r in records])) if n else 0.0,
        fps=float(fps),
        n_pairs=n,
        n_poses=len(errs),
        scenario=scenario or {},
    )


def modulated_stream(tag_map: TagMapImage, background: ImagePlane | None = None, delta_l: float = 4.0, seed: int = 0):
    """Two projected frames (one input frame at 30 -> 60 fps) over ``background``."""
    cfg = tag_map.config
    if background is None:
        background = synthetic_background(cfg.map_width, cfg.map_height, seed)
    return modulate_frame(background, ModulationConfig(tag_map.mask, delta_l=delta_l))


def run_e2e(
    scenario: CaptureScenario,
    tag_map: TagMapImage,
    modulated: Sequence[ImagePlane] | None = None,
    align: AlignmentConfig | None = None,
    knobs: PreprocessKnobs | None = None,
    n_jobs: int = 1,
) -> tuple[EvalReport, list[FrameRecord]]:
    """Simulate the capture, demodulate every frame pair and score poses."""
    scenario.validate()
    check_compatible(scenario, tag_map.config)
    if modulated is None:
        modulated = modulated_stream(tag_map, seed=scenario.seed)
    frames, truth = simulate_capture(scenario, modulated, n_jobs=n_jobs)
    state = DemodState(align or AlignmentConfig(), knobs or PreprocessKnobs())
    records, fps = evaluate_frames(frames, truth, scenario.intrinsics, tag_map.config, state)
    desc = {
        "frames": len(frames),
        "camera_fps": scenario.camera_fps,
        "noise_sigma": scenario.noise_sigma,
        "shadow": scenario.shadow is not None,
        "image_size": [scenario.intrinsics.width, scenario.intrinsics.height],
        **scenario.meta,
    }
    return summarize(records, fps, desc), records


def write_frame_csv(records: Sequence[FrameRecord], path) -> None:
    """Per-pair errors with ground-truth speed, for error-vs-speed plots."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "t", "speed", "n_tags", "shift_x", "shift_y", "rmse", *(f"err_{a}" for a in AXES)])
        for r in records:
            err = r.error if r.error is not None else [float("nan")] * 6
            sx, sy = r.shift if r.shift is not None else ("", "")
            w.writerow([r.frame, f"{r.t:.6f}", f"{r.speed:.5f}", r.n_tags, sx, sy, f"{r.rmse:.4f}", *(f"{e:.6f}" for e in err)])


@dataclass
class BenchResult:
    width: int
    height: int
    pairs: int
    median_fps: float
    mean_fps: float

    def to_dict(self) -> dict:
        return asdict(self)


def bench(frames: Sequence[ImagePlane], intrinsics: CameraIntrinsics, config: TagMapConfig, state: DemodState | None = None) -> BenchResult:
    """Wall-clock rate of demodulate + pose per frame pair."""
    if len(frames) < 2:
        raise ValueError("bench needs at least two frames")
    state = state or DemodState()
    times = []
    for frame in frames:
        t0 = time.perf_counter()
        results = demodulate(state, frame, config)
        if results is None:
            continue
        estimate_pose(results, intrinsics)
        times.append(time.perf_counter() - t0)
    times = np.array(times)
    return BenchResult(
        frames[0].width, frames[0].height, len(times), float(1.0 / np.median(times)), float(len(times) / times.sum())
    )
