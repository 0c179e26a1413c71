"""Skeleton-to-orientation geometry.

Camera frame convention (fixed, not configurable):

    x : image-vertical, pointing down (row direction)
    y : image-horizontal, pointing right (column direction)
    z : camera viewing direction, into the scene

The triple satisfies x cross y = z. All skeleton coordinates handed to this
module are expected in this frame. Under this convention a person with their
back to the camera has orientation 0 degrees, a person facing the camera has
180 degrees, and a profile pose facing image-left reads 90 degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Joints that must be present to compute an orientation.
REQUIRED_JOINTS = ("left_shoulder", "right_shoulder", "left_hip", "right_hip")

# Full 18-joint body model used by the synthetic generator and the lifter.
# The 16 joints up to right_ankle mirror the usual per-joint report layout
# (4 singles + 6 left/right pairs); the eyes carry forward-facing signal.
JOINTS_18 = (
    "torso",
    "neck",
    "head",
    "nose",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "left_eye",
    "right_eye",
)

JOINTS_16 = JOINTS_18[:16]

N_BINS = 72
BIN_WIDTH_DEG = 360.0 / N_BINS

# Cross products with norm below EPS_DEGENERATE * scale are treated as
# degenerate (collinear torso/shoulder). Scale-aware so that skeletons in
# small units are not falsely rejected.
EPS_DEGENERATE = 1e-8
# Minimum norm of the y-z projection of the chest direction; below this the
# orientation is undefined (chest nearly parallel to the image-vertical axis).
EPS_PROJECTION = 1e-6


class GeometryError(ValueError):
    """Base class for skeleton geometry failures."""


class MissingJointError(GeometryError):
    def __init__(self, joint: str):
        self.joint = joint
        super().__init__(f"required joint missing or non-finite: {joint!r}")


class DegeneratePoseError(GeometryError):
    """Torso and shoulder vectors are collinear or zero."""


class ChestNearAxisXError(GeometryError):
    """Chest direction nearly parallel to the image-vertical axis."""


def wrap_degrees(theta_deg: float) -> float:
    """Fold an angle into [0, 360). Guards the float quirk where a tiny
    negative input mod 360 rounds up to exactly 360.0."""
    theta = float(theta_deg) % 360.0
    return 0.0 if theta >= 360.0 else theta


def theta_to_bin(theta_deg: float) -> int:
    """Map an angle in degrees to its 5-degree bin index.

    Bin i covers [5i - 2.5, 5i + 2.5); boundary ties go to the upper bin
    (round half up), so theta_to_bin(2.5) == 1.
    """
    theta = wrap_degrees(theta_deg)
    return int(math.floor(theta / BIN_WIDTH_DEG + 0.5)) % N_BINS


def bin_center_deg(bin_index: int) -> float:
    return (bin_index % N_BINS) * BIN_WIDTH_DEG


@dataclass(frozen=True)
class OrientationLabel:
    """Continuous orientation angle plus its 5-degree bin."""

    theta_deg: float
    bin: int

    def __post_init__(self):
        if not math.isfinite(self.theta_deg) or not 0.0 <= self.theta_deg < 360.0:
            raise ValueError(f"theta_deg must be finite in [0, 360): {self.theta_deg}")
        if self.bin != theta_to_bin(self.theta_deg):
            raise ValueError(
                f"bin {self.bin} inconsistent with theta {self.theta_deg} "
                f"(expected {theta_to_bin(self.theta_deg)})"
            )

    @classmethod
    def from_theta(cls, theta_deg: float) -> "OrientationLabel":
        theta = wrap_degrees(theta_deg)
        return cls(theta_deg=theta, bin=theta_to_bin(theta))


@dataclass
class Skeleton3D:
    """Named 3-D joints in the camera frame documented above."""

    joints: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.joints = {name: np.asarray(p, dtype=float) for name, p in self.joints.items()}
        for name, p in self.joints.items():
            if p.shape != (3,):
                raise ValueError(f"joint {name!r} must be a 3-vector, got shape {p.shape}")

    def joint(self, name: str) -> np.ndarray:
        p = self.joints.get(name)
        if p is None or not np.all(np.isfinite(p)):
            raise MissingJointError(name)
        return p

    def has_required_joints(self) -> bool:
        try:
            for name in REQUIRED_JOINTS:
                self.joint(name)
        except MissingJointError:
            return False
        return True


def shoulder_vector(s: Skeleton3D) -> np.ndarray:
    """Shoulder direction: right shoulder minus left shoulder. Not normalized."""
    return s.joint("right_shoulder") - s.joint("left_shoulder")


def torso_vector(s: Skeleton3D) -> np.ndarray:
    """Torso direction: hip midpoint minus shoulder midpoint. Not normalized."""
    hips = 0.5 * (s.joint("left_hip") + s.joint("right_hip"))
    shoulders = 0.5 * (s.joint("left_shoulder") + s.joint("right_shoulder"))
    return hips - shoulders


def chest_direction(s: Skeleton3D) -> np.ndarray:
    """Unit chest-facing direction: normalized cross product of torso and shoulder vectors."""
    t = torso_vector(s)
    sv = shoulder_vector(s)
    c = np.cross(t, sv)
    norm = float(np.linalg.norm(c))
    scale = max(float(np.linalg.norm(t)), float(np.linalg.norm(sv)), 1.0)
    if norm <= EPS_DEGENERATE * scale:
        raise DegeneratePoseError(
            f"torso and shoulder vectors collinear or zero (|T x S| = {norm:.3e})"
        )
    return c / norm


def orientation_from_skeleton(s: Skeleton3D) -> OrientationLabel:
    """Body orientation from the y-z projection of the chest direction.

    theta = atan2(C_y, C_z) mapped into [0, 360). Raises ChestNearAxisXError
    when the chest direction is nearly parallel to the image-vertical axis
    (person lying flat toward or away from it), DegeneratePoseError when the
    chest direction itself is undefined.
    """
    c = chest_direction(s)
    proj = math.hypot(c[1], c[2])
    if proj <= EPS_PROJECTION:
        raise ChestNearAxisXError(
            f"chest direction nearly parallel to x axis (projection norm {proj:.3e})"
        )
    theta = wrap_degrees(math.degrees(math.atan2(c[1], c[2])))
    return OrientationLabel.from_theta(theta)


@dataclass(frozen=True)
class ConversionResult:
    """Per-record outcome of a pose-dataset conversion.

    Either `label` is set, or `skipped` is True and `reason` names the error.
    """

    index: int
    label: OrientationLabel | None = None
    skipped: bool = False
    reason: str = ""


def convert_pose_dataset(poses) -> list[ConversionResult]:
    """Element-wise orientation extraction; degenerate records become skip markers."""
    out: list[ConversionResult] = []
    for i, skel in enumerate(poses):
        try:
            label = orientation_from_skeleton(skel)
        except GeometryError as err:
            out.append(
                ConversionResult(index=i, skipped=True, reason=f"{type(err).__name__}: {err}")
            )
        else:
            out.append(ConversionResult(index=i, label=label))
    return out


def rotate_about_x(points: np.ndarray, angle_deg: float) -> np.ndarray:
    """Right-hand-rule rotation about the x axis, in coordinates.

    Rotating a skeleton by +delta changes its orientation by -delta (mod 360).
    """
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    return np.asarray(points, dtype=float) @ rot.T


def rotate_skeleton_about_x(s: Skeleton3D, angle_deg: float) -> Skeleton3D:
    return Skeleton3D(
        joints={name: rotate_about_x(p, angle_deg) for name, p in s.joints.items()}
    )
