"""Label/pose file formats, manifests, augmentation, the synthetic skeleton
generator, and dataset statistics.

Label files are line-oriented JSON, one record per line, with fields
image_ref, instance_id, bbox [x, y, w, h], theta_deg, bin, labeler_id,
timestamp, source. Unknown fields are preserved on round trip. 2-D keypoints
use the pixel convention (x = image-horizontal, y = image-vertical); 3-D
skeletons use the camera frame documented in geometry.py.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .geometry import (
    JOINTS_18,
    N_BINS,
    OrientationLabel,
    Skeleton3D,
)

SOURCES = ("human", "converted", "synthetic")
SPLITS = ("train", "test")

_SCHEMA_FIELDS = (
    "image_ref",
    "instance_id",
    "bbox",
    "theta_deg",
    "bin",
    "labeler_id",
    "timestamp",
    "source",
    "split",
)


class LabelFormatError(ValueError):
    """Malformed or inconsistent label data; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class RotationNotAllowedError(ValueError):
    """Rotation augmentation requested on an orientation-labeled record."""


@dataclass
class LabelRecord:
    image_ref: str
    instance_id: str
    bbox: tuple[float, float, float, float]  # x, y, w, h (pixels)
    orientation: OrientationLabel
    labeler_id: str
    timestamp: datetime
    source: str
    split: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        x, y, w, h = self.bbox
        if not (w > 0 and h > 0):
            raise ValueError(f"bbox width/height must be positive: {self.bbox}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}: {self.source!r}")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}: {self.split!r}")
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware (UTC)")

    def to_json_dict(self) -> dict:
        out = {
            "image_ref": self.image_ref,
            "instance_id": self.instance_id,
            "bbox": [float(v) for v in self.bbox],
            "theta_deg": self.orientation.theta_deg,
            "bin": self.orientation.bin,
            "labeler_id": self.labeler_id,
            "timestamp": self.timestamp.astimezone(timezone.utc).isoformat(),
            "source": self.source,
        }
        if self.split is not None:
            out["split"] = self.split
        out.update(self.extra)
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "LabelRecord":
        try:
            orientation = OrientationLabel(theta_deg=float(d["theta_deg"]), bin=int(d["bin"]))
            return cls(
                image_ref=str(d["image_ref"]),
                instance_id=str(d["instance_id"]),
                bbox=tuple(float(v) for v in d["bbox"]),
                orientation=orientation,
                labeler_id=str(d["labeler_id"]),
                timestamp=datetime.fromisoformat(d["timestamp"]),
                source=str(d["source"]),
                split=d.get("split"),
                extra={k: v for k, v in d.items() if k not in _SCHEMA_FIELDS},
            )
        except KeyError as err:
            raise LabelFormatError(f"missing field {err}") from err


@dataclass
class DatasetStats:
    orientation_hist: np.ndarray  # (72,) counts
    resolution_values: np.ndarray  # sqrt(w*h) per record
    resolution_bin_width: float = 10.0

    def resolution_hist(self) -> list[tuple[float, int]]:
        """Counts per [k*width, (k+1)*width) bucket, keyed by the lower edge."""
        if self.resolution_values.size == 0:
            return []
        width = self.resolution_bin_width
        idx = np.floor(self.resolution_values / width).astype(int)
        out = []
        for k in range(int(idx.max()) + 1):
            out.append((k * width, int(np.sum(idx == k))))
        return out

    def orientation_csv(self) -> str:
        lines = ["bin,count"]
        lines += [f"{i},{int(c)}" for i, c in enumerate(self.orientation_hist)]
        return "\n".join(lines) + "\n"

    def resolution_csv(self) -> str:
        lines = ["resolution,count"]
        lines += [f"{lo:g},{c}" for lo, c in self.resolution_hist()]
        return "\n".join(lines) + "\n"


@dataclass
class DatasetManifest:
    records: list[LabelRecord]

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        image_split: dict[str, str | None] = {}
        for i, r in enumerate(self.records):
            key = (r.image_ref, r.instance_id)
            if key in seen:
                raise LabelFormatError(f"duplicate record {key}", line=i + 1)
            seen.add(key)
            if r.image_ref in image_split:
                if image_split[r.image_ref] != r.split:
                    raise LabelFormatError(
                        f"image {r.image_ref!r} straddles splits "
                        f"({image_split[r.image_ref]!r} vs {r.split!r})",
                        line=i + 1,
                    )
            else:
                image_split[r.image_ref] = r.split

    def __len__(self) -> int:
        return len(self.records)

    def split_records(self, split: str) -> list[LabelRecord]:
        return [r for r in self.records if r.split == split]

    def by_instance(self) -> dict[str, LabelRecord]:
        return {r.instance_id: r for r in self.records}

    def stats(self, resolution_bin_width: float = 10.0) -> DatasetStats:
        hist = np.zeros(N_BINS, dtype=int)
        res = []
        for r in self.records:
            hist[r.orientation.bin] += 1
            res.append(math.sqrt(r.bbox[2] * r.bbox[3]))
        return DatasetStats(
            orientation_hist=hist,
            resolution_values=np.asarray(res, dtype=float),
            resolution_bin_width=resolution_bin_width,
        )


def read_labels(path) -> DatasetManifest:
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as err:
                raise LabelFormatError(f"invalid JSON: {err}", line=lineno) from err
            try:
                records.append(LabelRecord.from_json_dict(d))
            except (ValueError, TypeError) as err:
                raise LabelFormatError(str(err), line=lineno) from err
    return DatasetManifest(records=records)


def write_labels(manifest: DatasetManifest, path) -> None:
    with open(path, "w") as f:
        for r in manifest.records:
            f.write(json.dumps(r.to_json_dict()) + "\n")


def recover_label_lines(path) -> tuple[list[dict], int]:
    """Read the longest parseable prefix of a label log.

    Returns (parsed line dicts, number of trailing bytes dropped). A crash
    mid-append leaves at most one partial trailing line, which is dropped.
    """
    parsed: list[dict] = []
    good_bytes = 0
    with open(path, "rb") as f:
        blob = f.read()
    offset = 0
    for raw in blob.split(b"\n"):
        end = offset + len(raw) + 1
        text = raw.decode("utf-8", errors="replace").strip()
        if text:
            try:
                parsed.append(json.loads(text))
            except json.JSONDecodeError:
                break
        good_bytes = min(end, len(blob))
        offset = end
    return parsed, len(blob) - good_bytes


# -- augmentation --------------------------------------------------------------


def flip_label(theta_deg: float) -> float:
    """Orientation under horizontal flip: the image-horizontal axis negates,
    so sin(theta) flips sign."""
    return (360.0 - float(theta_deg)) % 360.0


def _swap_side(name: str) -> str:
    if name.startswith("left_"):
        return "right_" + name[len("left_"):]
    if name.startswith("right_"):
        return "left_" + name[len("right_"):]
    return name


@dataclass
class Sample:
    """A label record together with its optional geometry payloads."""

    record: LabelRecord
    skeleton: Skeleton3D | None = None
    keypoints2d: dict[str, tuple[float, float]] | None = None


def augment(sample: Sample, *, flip: bool = False, scale: float = 1.0, rotate_deg=None) -> Sample:
    """Flip/scale augmentation. Rotation is rejected for orientation records
    because it would deform the label."""
    if rotate_deg is not None:
        raise RotationNotAllowedError(
            "rotation augmentation is not allowed on orientation-labeled records"
        )
    record = sample.record
    skeleton = sample.skeleton
    keypoints = sample.keypoints2d

    if flip:
        theta = flip_label(record.orientation.theta_deg)
        record = replace(record, orientation=OrientationLabel.from_theta(theta))
        if keypoints is not None:
            bx, _, bw, _ = record.bbox
            cx = bx + bw / 2.0
            keypoints = {
                _swap_side(n): (2.0 * cx - x, y) for n, (x, y) in keypoints.items()
            }
        if skeleton is not None:
            skeleton = Skeleton3D(
                joints={
                    _swap_side(n): np.array([p[0], -p[1], p[2]])
                    for n, p in skeleton.joints.items()
                }
            )

    if scale != 1.0:
        if not scale > 0:
            raise ValueError("scale factor must be positive")
        x, y, w, h = record.bbox
        record = replace(record, bbox=(x * scale, y * scale, w * scale, h * scale))
        if keypoints is not None:
            keypoints = {n: (x * scale, y * scale) for n, (x, y) in keypoints.items()}

    return Sample(record=record, skeleton=skeleton, keypoints2d=keypoints)


# -- synthetic generator ---------------------------------------------------------

# Canonical back-to-camera body (orientation 0), camera-frame coordinates,
# shoulder half-width 1. Face, forearms, and feet lean slightly toward +z
# (the chest side); those offsets are what make orientation recoverable from
# a 2-D projection, and they are kept subtle so that a near-mirror pose is
# genuinely hard to disambiguate without orientation supervision.
CANONICAL_BODY: dict[str, tuple[float, float, float]] = {
    "neck": (0.0, 0.0, 0.0),
    "head": (-0.55, 0.0, 0.04),
    "nose": (-0.45, 0.0, 0.22),
    "left_eye": (-0.55, -0.18, 0.16),
    "right_eye": (-0.55, 0.18, 0.16),
    "left_shoulder": (0.0, -1.0, 0.0),
    "right_shoulder": (0.0, 1.0, 0.0),
    "left_elbow": (0.05, -1.8, 0.1),
    "right_elbow": (0.05, 1.8, 0.1),
    "left_wrist": (0.1, -1.9, 0.22),
    "right_wrist": (0.1, 1.9, 0.22),
    "torso": (1.0, 0.0, 0.0),
    "left_hip": (2.0, -0.55, 0.0),
    "right_hip": (2.0, 0.55, 0.0),
    "left_knee": (3.0, -0.6, 0.05),
    "right_knee": (3.0, 0.6, 0.05),
    "left_ankle": (4.0, -0.6, 0.1),
    "right_ankle": (4.0, 0.6, 0.1),
}

SYNTH_EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)


@dataclass
class SyntheticSpec:
    n_instances: int
    theta_dist: str = "uniform"  # 'uniform' or 'peaked'
    noise_sigma: float = 0.0  # 2-D keypoint noise, canonical body units
    limb_scale_range: tuple[float, float] = (0.85, 1.2)
    seed: int = 0
    instances_per_image: int = 2
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.theta_dist not in ("uniform", "peaked"):
            raise ValueError(f"unknown theta_dist: {self.theta_dist!r}")


@dataclass
class SyntheticDataset:
    skeletons: list[Skeleton3D]
    keypoints2d: list[dict[str, tuple[float, float]]]
    manifest: DatasetManifest


def _sample_theta(rng: np.random.Generator, dist: str) -> float:
    if dist == "uniform":
        return float(rng.uniform(0.0, 360.0))
    # Peaked-at-180 mixture: mostly camera-facing, with a uniform floor.
    if rng.uniform() < 0.7:
        return float((rng.normal(180.0, 40.0)) % 360.0)
    return float(rng.uniform(0.0, 360.0))


def make_body(rng: np.random.Generator, theta_deg: float, limb_scale_range=(0.85, 1.2)) -> Skeleton3D:
    """One randomized body at the given orientation: canonical T-pose with
    limb-length jitter, rotated about x by -theta so its orientation reads theta."""
    lo, hi = limb_scale_range
    global_scale = rng.uniform(lo, hi)
    width = rng.uniform(0.9, 1.1)
    height = rng.uniform(0.9, 1.1)
    a = math.radians(-theta_deg)
    c, s = math.cos(a), math.sin(a)
    joints = {}
    for name, (x, y, z) in CANONICAL_BODY.items():
        x2 = x * height * global_scale
        y2 = y * width * global_scale
        z2 = z * global_scale
        joints[name] = np.array([x2, c * y2 - s * z2, s * y2 + c * z2])
    return Skeleton3D(joints=joints)


def project_orthographic(
    skeleton: Skeleton3D,
    pixels_per_unit: float,
    center: tuple[float, float],
    rng: np.random.Generator | None = None,
    noise_sigma: float = 0.0,
) -> dict[str, tuple[float, float]]:
    """Drop depth and map camera coords to pixel keypoints.

    Pixel x = horizontal (camera y), pixel y = vertical (camera x).
    Noise is expressed in canonical body units and scaled with the body.
    """
    out = {}
    for name, p in skeleton.joints.items():
        u = center[0] + pixels_per_unit * p[1]
        v = center[1] + pixels_per_unit * p[0]
        if rng is not None and noise_sigma > 0:
            u += rng.normal(0.0, noise_sigma * pixels_per_unit)
            v += rng.normal(0.0, noise_sigma * pixels_per_unit)
        out[name] = (float(u), float(v))
    return out


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic synthetic dataset: skeletons, projected keypoints, labels."""
    rng = np.random.default_rng(spec.seed)
    skeletons: list[Skeleton3D] = []
    keypoints: list[dict[str, tuple[float, float]]] = []
    records: list[LabelRecord] = []

    n_images = (spec.n_instances + spec.instances_per_image - 1) // spec.instances_per_image
    image_splits = np.array(["train"] * n_images, dtype=object)
    n_test = int(round(n_images * (1.0 - spec.train_fraction)))
    if n_test > 0:
        test_idx = rng.choice(n_images, size=n_test, replace=False)
        image_splits[test_idx] = "test"

    for i in range(spec.n_instances):
        theta = _sample_theta(rng, spec.theta_dist)
        skel = make_body(rng, theta, spec.limb_scale_range)
        ppu = float(rng.uniform(20.0, 80.0))
        center = (float(rng.uniform(60.0, 200.0)), float(rng.uniform(60.0, 200.0)))
        kps = project_orthographic(skel, ppu, center, rng=rng, noise_sigma=spec.noise_sigma)

        us = [p[0] for p in kps.values()]
        vs = [p[1] for p in kps.values()]
        margin = 0.05 * max(max(us) - min(us), max(vs) - min(vs), 1.0)
        bbox = (
            min(us) - margin,
            min(vs) - margin,
            (max(us) - min(us)) + 2 * margin,
            (max(vs) - min(vs)) + 2 * margin,
        )

        img_idx = i // spec.instances_per_image
        records.append(
            LabelRecord(
                image_ref=f"synth_{img_idx:06d}.png",
                instance_id=f"synth_{i:06d}",
                bbox=bbox,
                orientation=OrientationLabel.from_theta(theta),
                labeler_id="synthetic",
                timestamp=SYNTH_EPOCH + timedelta(seconds=i),
                source="synthetic",
                split=str(image_splits[img_idx]),
            )
        )
        skeletons.append(skel)
        keypoints.append(kps)

    return SyntheticDataset(
        skeletons=skeletons, keypoints2d=keypoints, manifest=DatasetManifest(records=records)
    )


# -- pose / keypoint files -----------------------------------------------------


def write_skeletons(skeletons, instance_ids, path) -> None:
    with open(path, "w") as f:
        for sid, skel in zip(instance_ids, skeletons):
            d = {
                "instance_id": sid,
                "joints": {n: [float(v) for v in p] for n, p in skel.joints.items()},
            }
            f.write(json.dumps(d) + "\n")


def read_skeletons(path) -> tuple[list[str], list[Skeleton3D]]:
    ids, skels = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                ids.append(str(d.get("instance_id", f"record_{lineno}")))
                skels.append(
                    Skeleton3D(joints={n: np.asarray(p, dtype=float) for n, p in d["joints"].items()})
                )
            except (json.JSONDecodeError, KeyError, ValueError) as err:
                raise LabelFormatError(f"bad skeleton record: {err}", line=lineno) from err
    return ids, skels


def write_keypoints2d(keypoints, instance_ids, path) -> None:
    with open(path, "w") as f:
        for sid, kps in zip(instance_ids, keypoints):
            d = {
                "instance_id": sid,
                "keypoints": {n: [float(x), float(y)] for n, (x, y) in kps.items()},
            }
            f.write(json.dumps(d) + "\n")


def read_keypoints2d(path) -> tuple[list[str], list[dict[str, tuple[float, float]]]]:
    ids, kps = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                ids.append(str(d.get("instance_id", f"record_{lineno}")))
                kps.append({n: (float(p[0]), float(p[1])) for n, p in d["keypoints"].items()})
            except (json.JSONDecodeError, KeyError, ValueError, IndexError) as err:
                raise LabelFormatError(f"bad keypoint record: {err}", line=lineno) from err
    return ids, kps


def convert_pose_dataset_to_records(
    instance_ids, skeletons, instances_per_image: int = 1
) -> tuple[list[LabelRecord], list[dict]]:
    """Orientation labels from 3-D poses; degenerate poses become skip entries.

    Converted records carry a pseudo-bbox from the orthographic projection of
    the joints and a fixed timestamp (conversion is not an annotation event,
    and fixed timestamps keep re-runs byte-identical).
    """
    from .geometry import convert_pose_dataset

    results = convert_pose_dataset(skeletons)
    records: list[LabelRecord] = []
    skipped: list[dict] = []
    for sid, skel, result in zip(instance_ids, skeletons, results):
        if result.skipped:
            skipped.append({"instance_id": sid, "index": result.index, "reason": result.reason})
            continue
        pts = np.stack(list(skel.joints.values()))
        u, v = pts[:, 1], pts[:, 0]
        margin = 0.05 * max(float(u.max() - u.min()), float(v.max() - v.min()), 1.0)
        bbox = (
            float(u.min()) - margin,
            float(v.min()) - margin,
            float(u.max() - u.min()) + 2 * margin,
            float(v.max() - v.min()) + 2 * margin,
        )
        records.append(
            LabelRecord(
                image_ref=f"pose_{result.index // instances_per_image:06d}",
                instance_id=sid,
                bbox=bbox,
                orientation=result.label,
                labeler_id="converter",
                timestamp=SYNTH_EPOCH,
                source="converted",
            )
        )
    return records, skipped


def keypoints_to_features(kps: dict[str, tuple[float, float]], joint_order=JOINTS_18) -> np.ndarray:
    """Normalized flat feature vector from named 2-D keypoints.

    Centers on the keypoint centroid and divides by the RMS radius, so
    features are invariant to image translation and scale.
    """
    pts = np.array([kps[name] for name in joint_order], dtype=float)
    pts -= pts.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum(pts**2, axis=1))))
    if rms <= 0:
        raise ValueError("degenerate keypoints: zero spread")
    return (pts / rms).ravel()
