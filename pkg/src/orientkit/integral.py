"""Integral (soft-argmax) pose regression over heatmap volumes, the three
supervision losses, and pose metrics.

Volume axes follow the camera frame: axis 0 = x (image-vertical), axis 1 = y
(image-horizontal), axis 2 = z (depth). Coordinates are 1-based: p_x in
[1, W], p_y in [1, H], p_z in [1, D].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .geometry import EPS_DEGENERATE, Skeleton3D

VOLUME_SUM_TOL = 1e-6


@dataclass
class HeatmapVolume:
    """Per-joint normalized probability volumes of shape (W, H, D)."""

    values: np.ndarray  # (K, W, H, D)
    joint_names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4:
            raise ValueError(f"expected (K, W, H, D) array, got shape {self.values.shape}")
        if len(self.joint_names) != self.values.shape[0]:
            raise ValueError("joint_names length must match the leading axis")
        if np.any(self.values < 0):
            raise ValueError("heatmap entries must be non-negative")
        sums = self.values.sum(axis=(1, 2, 3))
        if np.any(np.abs(sums - 1.0) > VOLUME_SUM_TOL):
            raise ValueError(f"per-joint volumes must sum to 1 (sums: {sums})")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape[1:]

    def joint_index(self, k) -> int:
        if isinstance(k, str):
            return self.joint_names.index(k)
        return int(k)


@dataclass
class PoseEstimate:
    """Per-joint 3-D coordinates in heatmap coordinates; names shared with Skeleton3D."""

    joints: dict[str, np.ndarray]

    def __post_init__(self):
        self.joints = {n: np.asarray(p, dtype=float) for n, p in self.joints.items()}

    def as_array(self, names=None) -> np.ndarray:
        names = list(self.joints) if names is None else list(names)
        return np.stack([self.joints[n] for n in names])


@dataclass(frozen=True)
class LossWeights:
    """Weights for the three supervision sources."""

    lambda_2d: float = 1.0
    lambda_3d: float = 1.0
    lambda_ori: float = 0.1

    def __post_init__(self):
        if min(self.lambda_2d, self.lambda_3d, self.lambda_ori) < 0:
            raise ValueError("loss weights must be non-negative")


def coordinate_grids(dims: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1-based coordinate value of each flattened voxel, per axis (each (W*H*D,))."""
    w, h, d = dims
    gx, gy, gz = np.meshgrid(
        np.arange(1, w + 1), np.arange(1, h + 1), np.arange(1, d + 1), indexing="ij"
    )
    return gx.ravel().astype(float), gy.ravel().astype(float), gz.ravel().astype(float)


def soft_argmax(h: HeatmapVolume, k) -> np.ndarray:
    """Expected coordinate of joint k under its normalized volume."""
    v = h.values[h.joint_index(k)]
    w, hh, d = v.shape
    ex = float(v.sum(axis=(1, 2)) @ np.arange(1, w + 1))
    ey = float(v.sum(axis=(0, 2)) @ np.arange(1, hh + 1))
    ez = float(v.sum(axis=(0, 1)) @ np.arange(1, d + 1))
    return np.array([ex, ey, ez])


def heat_vectors(h: HeatmapVolume, k) -> tuple[float, float]:
    """1-D x/y marginal expectations; equal the x/y components of soft_argmax."""
    v = h.values[h.joint_index(k)]
    w, hh, _ = v.shape
    x_marginal = v.sum(axis=(1, 2))
    y_marginal = v.sum(axis=(0, 2))
    ex = float(x_marginal @ np.arange(1, w + 1))
    ey = float(y_marginal @ np.arange(1, hh + 1))
    return ex, ey


def pose_from_volume(h: HeatmapVolume) -> PoseEstimate:
    return PoseEstimate(
        joints={name: soft_argmax(h, i) for i, name in enumerate(h.joint_names)}
    )


def loss_3d(est: PoseEstimate, gt: Skeleton3D) -> float:
    """Sum over joints of squared Euclidean distance."""
    total = 0.0
    for name, p in est.joints.items():
        total += float(np.sum((p - gt.joint(name)) ** 2))
    return total


def loss_2d(h: HeatmapVolume, gt_2d: dict) -> float:
    """Squared error of the x/y marginal expectations against 2-D ground truth.

    gt_2d maps joint name -> (x, y) in heatmap coordinates.
    """
    total = 0.0
    for name, (gx, gy) in gt_2d.items():
        ex, ey = heat_vectors(h, name)
        total += (ex - float(gx)) ** 2 + (ey - float(gy)) ** 2
    return total


class OriLossResult(NamedTuple):
    value: float
    degenerate: bool


def orientation_loss_from_chest(c_y: float, c_z: float, theta_deg: float) -> float:
    t = math.radians(theta_deg)
    return (c_z - math.cos(t)) ** 2 + (c_y - math.sin(t)) ** 2


def orientation_loss(est: PoseEstimate, theta_gt_deg: float) -> OriLossResult:
    """Squared error of the estimated chest direction's y/z components against
    the ground-truth orientation. Degenerate poses yield a flagged zero."""
    j = est.joints
    s = j["right_shoulder"] - j["left_shoulder"]
    t = 0.5 * (j["left_hip"] + j["right_hip"]) - 0.5 * (j["left_shoulder"] + j["right_shoulder"])
    c = np.cross(t, s)
    norm = float(np.linalg.norm(c))
    scale = max(float(np.linalg.norm(t)), float(np.linalg.norm(s)), 1.0)
    if norm <= EPS_DEGENERATE * scale:
        return OriLossResult(0.0, True)
    c = c / norm
    return OriLossResult(orientation_loss_from_chest(float(c[1]), float(c[2]), theta_gt_deg), False)


@dataclass
class SupervisionSample:
    """One training sample tagged with its supervision source.

    source: 'pose3d' (estimate + gt_skeleton), 'pose2d' (volume + gt_2d),
    or 'orient' (estimate + theta_deg).
    """

    source: str
    estimate: PoseEstimate | None = None
    volume: HeatmapVolume | None = None
    gt_skeleton: Skeleton3D | None = None
    gt_2d: dict | None = None
    theta_deg: float | None = None


def total_loss(batch, weights: LossWeights) -> float:
    """Mean over the batch of the source-selected, weighted per-sample loss."""
    if not batch:
        raise ValueError("empty batch")
    total = 0.0
    for sample in batch:
        if sample.source == "pose3d":
            total += weights.lambda_3d * loss_3d(sample.estimate, sample.gt_skeleton)
        elif sample.source == "pose2d":
            total += weights.lambda_2d * loss_2d(sample.volume, sample.gt_2d)
        elif sample.source == "orient":
            total += weights.lambda_ori * orientation_loss(sample.estimate, sample.theta_deg).value
        else:
            raise ValueError(f"unknown supervision source: {sample.source!r}")
    return total / len(batch)


# -- metrics ------------------------------------------------------------------


@dataclass
class PoseMetricReport:
    """MPJPE breakdowns; units follow the input coordinates."""

    mpjpe: float
    per_joint: dict[str, float]
    per_axis: dict[str, float]
    pa_mpjpe: float | None = None
    units: str = "heatmap"
    extra: dict = field(default_factory=dict)


def _paired_base(name: str) -> str | None:
    for prefix in ("left_", "right_"):
        if name.startswith(prefix):
            return name[len(prefix):]
    return None


def mpjpe(est: PoseEstimate, gt: Skeleton3D, units: str = "heatmap") -> PoseMetricReport:
    """Mean per-joint position error with per-joint and per-axis breakdowns.

    Left/right joint pairs are averaged into a single row keyed by the base
    name; per-axis values are mean absolute errors per coordinate.
    """
    names = list(est.joints)
    missing = [n for n in names if n not in gt.joints]
    if missing:
        raise ValueError(f"ground truth missing joints: {missing}")
    e = est.as_array(names)
    g = np.stack([gt.joint(n) for n in names])
    dists = np.linalg.norm(e - g, axis=1)

    per_joint_raw = dict(zip(names, dists))
    per_joint: dict[str, float] = {}
    seen = set()
    for name in names:
        base = _paired_base(name)
        if base is None:
            per_joint[name] = float(per_joint_raw[name])
        elif base not in seen:
            seen.add(base)
            pair = [v for n, v in per_joint_raw.items() if _paired_base(n) == base]
            per_joint[base] = float(np.mean(pair))

    abs_err = np.abs(e - g)
    per_axis = {
        "X": float(abs_err[:, 0].mean()),
        "Y": float(abs_err[:, 1].mean()),
        "Z": float(abs_err[:, 2].mean()),
    }
    return PoseMetricReport(
        mpjpe=float(dists.mean()),
        per_joint=per_joint,
        per_axis=per_axis,
        units=units,
    )


def similarity_align(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Best similarity transform (scale, rotation, translation) of source onto
    target; reflections are disallowed. Arrays are (K, 3)."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.shape[0] < 3:
        raise ValueError("need matching (K>=3, 3) point sets")
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    sc = source - mu_s
    tc = target - mu_t
    if np.linalg.matrix_rank(tc) < 2:
        raise ValueError("degenerate (collinear) ground-truth joints")
    cov = tc.T @ sc
    u, svals, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    corr = np.diag([1.0, 1.0, d])
    rot = u @ corr @ vt
    denom = float(np.sum(sc**2))
    scale = float(np.trace(np.diag(svals) @ corr)) / denom
    return scale * sc @ rot.T + mu_t


def pa_mpjpe(est: PoseEstimate, gt: Skeleton3D) -> float:
    """MPJPE after optimal similarity (Procrustes) alignment of est onto gt."""
    names = list(est.joints)
    e = est.as_array(names)
    g = np.stack([gt.joint(n) for n in names])
    aligned = similarity_align(e, g)
    return float(np.linalg.norm(aligned - g, axis=1).mean())


# -- graph builders used by the lifter trainer --------------------------------


def soft_argmax_vars(probs: Var, dims: tuple[int, int, int]) -> tuple[Var, Var, Var]:
    """Per-axis coordinate expectations from flattened volume probabilities.

    probs has shape (..., W*H*D); returns three Vars of shape (...,).
    """
    gx, gy, gz = coordinate_grids(dims)
    xs = (probs * gx).sum(axis=-1)
    ys = (probs * gy).sum(axis=-1)
    zs = (probs * gz).sum(axis=-1)
    return xs, ys, zs


def loss_3d_var(xs: Var, ys: Var, zs: Var, gt: np.ndarray, mask: np.ndarray) -> Var:
    """Masked sum of squared distances. xs/ys/zs: (B, K); gt: (B, K, 3);
    mask: (B,) 0/1 selecting samples with 3-D supervision."""
    m = mask[:, None]
    dx = (xs - gt[:, :, 0]) * m
    dy = (ys - gt[:, :, 1]) * m
    dz = (zs - gt[:, :, 2]) * m
    return (dx * dx + dy * dy + dz * dz).sum()


def loss_2d_var(xs: Var, ys: Var, gt2d: np.ndarray, mask: np.ndarray) -> Var:
    """Masked squared error of x/y expectations. gt2d: (B, K, 2)."""
    m = mask[:, None]
    dx = (xs - gt2d[:, :, 0]) * m
    dy = (ys - gt2d[:, :, 1]) * m
    return (dx * dx + dy * dy).sum()


def orientation_loss_var(
    xs: Var,
    ys: Var,
    zs: Var,
    joint_idx: dict[str, int],
    theta_deg: np.ndarray,
    mask: np.ndarray,
) -> tuple[Var, int]:
    """Masked orientation loss over a batch of joint expectations.

    Degenerate poses (near-zero chest cross product, judged on current
    values) are excluded from the graph and counted, not errored.
    Returns (summed loss Var, number of degenerate samples masked out).
    """
    ls, rs = joint_idx["left_shoulder"], joint_idx["right_shoulder"]
    lh, rh = joint_idx["left_hip"], joint_idx["right_hip"]

    def comp(v: Var, k: int) -> Var:
        return v[:, k]

    sx = comp(xs, rs) - comp(xs, ls)
    sy = comp(ys, rs) - comp(ys, ls)
    sz = comp(zs, rs) - comp(zs, ls)
    tx = (comp(xs, lh) + comp(xs, rh)) * 0.5 - (comp(xs, ls) + comp(xs, rs)) * 0.5
    ty = (comp(ys, lh) + comp(ys, rh)) * 0.5 - (comp(ys, ls) + comp(ys, rs)) * 0.5
    tz = (comp(zs, lh) + comp(zs, rh)) * 0.5 - (comp(zs, ls) + comp(zs, rs)) * 0.5

    cx = ty * sz - tz * sy
    cy = tz * sx - tx * sz
    cz = tx * sy - ty * sx
    norm_sq = cx * cx + cy * cy + cz * cz

    s_norm = np.sqrt(sx.value**2 + sy.value**2 + sz.value**2)
    t_norm = np.sqrt(tx.value**2 + ty.value**2 + tz.value**2)
    scale = np.maximum(np.maximum(s_norm, t_norm), 1.0)
    ok = (np.sqrt(norm_sq.value) > EPS_DEGENERATE * scale) & (mask > 0)
    n_degenerate = int(np.sum((mask > 0) & ~ok))
    sel = ok.astype(float)

    # Guard the sqrt for masked entries; their contribution is zeroed below.
    norm = ad.sqrt(norm_sq + (1.0 - sel))
    rad = np.radians(theta_deg)
    dz = cz / norm - np.cos(rad)
    dy = cy / norm - np.sin(rad)
    loss = ((dz * dz + dy * dy) * sel).sum()
    return loss, n_degenerate
