"""Invisible projected tags: hide fiducial tags in projected video by fast
lightness flicker, recover them from a high-speed camera and localize."""

__version__ = "0.1.0"

from .demodulator import AlignmentConfig, DemodState, DetectionResult, TagDemodulator, demodulate, estimate_shift
from .detector import Detection, detect_tags
from .geometry import CameraIntrinsics, Pose
from .modulator import ModulationConfig, TagModulator, modulate_frame
from .pose import PlanarPoseEstimator, PnpInput, WorldPose, invert_pose, solve_planar_pnp
from .tagmap import TagMapConfig, builtin_family, generate_map, lookup_world_corners
from .telemetry import decode_datagram, encode_datagram

__all__ = [
    "AlignmentConfig",
    "CameraIntrinsics",
    "DemodState",
    "Detection",
    "DetectionResult",
    "ModulationConfig",
    "PlanarPoseEstimator",
    "PnpInput",
    "Pose",
    "TagDemodulator",
    "TagMapConfig",
    "TagModulator",
    "WorldPose",
    "builtin_family",
    "decode_datagram",
    "demodulate",
    "detect_tags",
    "encode_datagram",
    "estimate_shift",
    "generate_map",
    "invert_pose",
    "lookup_world_corners",
    "modulate_frame",
    "solve_planar_pnp",
]
