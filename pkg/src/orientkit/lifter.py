"""Toy 2-D-to-3-D lifter trained with the triple-source loss, and its
synthetic benchmark.

The lifter maps normalized 2-D keypoints to per-joint heatmap volumes; joint
positions are the soft-argmax expectations. Training mixes three supervision
sources per batch (3-D poses, 2-D poses, orientation labels), mirroring the
setting where full 3-D labels cover only a narrow slice of the data while
orientation labels are cheap and diverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .data import (
    LabelFormatError,
    SyntheticSpec,
    generate_synthetic,
    keypoints_to_features,
    make_body,
    project_orthographic,
)
from .geometry import JOINTS_16, Skeleton3D
from .hboe import TrainingDiverged
from .integral import (
    HeatmapVolume,
    LossWeights,
    PoseEstimate,
    PoseMetricReport,
    loss_2d_var,
    loss_3d_var,
    mpjpe,
    orientation_loss_var,
    pa_mpjpe,
    soft_argmax_vars,
)
from .nnet import Adam, DenseNet

# Camera-frame bounds that contain every body the synthetic generator can
# produce (canonical extents times the maximum limb/global scaling).
CAMERA_BOUNDS = np.array([[-1.2, 5.8], [-3.2, 3.2], [-3.2, 3.2]])


@dataclass(frozen=True)
class AxisMaps:
    """Per-axis affine between camera coordinates and heatmap coordinates."""

    scale: tuple[float, float, float]
    offset: tuple[float, float, float]

    @classmethod
    def for_dims(cls, dims: tuple[int, int, int], margin: float = 0.75) -> "AxisMaps":
        scale, offset = [], []
        for axis, (lo, hi) in enumerate(CAMERA_BOUNDS):
            s = (dims[axis] - 2 * margin - 1.0) / (hi - lo)
            scale.append(s)
            offset.append(1.0 + margin - s * lo)
        return cls(scale=tuple(scale), offset=tuple(offset))

    def to_heatmap(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) * np.asarray(self.scale) + np.asarray(self.offset)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - np.asarray(self.offset)) / np.asarray(self.scale)

    def to_dict(self) -> dict:
        return {"scale": list(self.scale), "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "AxisMaps":
        return cls(scale=tuple(d["scale"]), offset=tuple(d["offset"]))


@dataclass
class LifterSample:
    """One lifter example: 2-D keypoint input plus one kind of supervision."""

    instance_id: str
    keypoints: dict[str, tuple[float, float]]
    joints3d: Skeleton3D | None = None
    targets2d: dict[str, tuple[float, float]] | None = None
    theta_deg: float | None = None

    @property
    def source(self) -> str:
        if self.joints3d is not None:
            return "pose3d"
        if self.targets2d is not None:
            return "pose2d"
        if self.theta_deg is not None:
            return "orient"
        raise ValueError("sample carries no supervision")


def write_lifter_samples(samples, path) -> None:
    with open(path, "w") as f:
        for s in samples:
            d = {
                "instance_id": s.instance_id,
                "keypoints": {n: [float(x), float(y)] for n, (x, y) in s.keypoints.items()},
            }
            if s.joints3d is not None:
                d["joints"] = {n: [float(v) for v in p] for n, p in s.joints3d.joints.items()}
            if s.targets2d is not None:
                d["targets2d"] = {n: [float(x), float(y)] for n, (x, y) in s.targets2d.items()}
            if s.theta_deg is not None:
                d["theta_deg"] = float(s.theta_deg)
            f.write(json.dumps(d) + "\n")


def read_lifter_samples(path) -> list[LifterSample]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                out.append(
                    LifterSample(
                        instance_id=str(d.get("instance_id", f"record_{lineno}")),
                        keypoints={n: (float(p[0]), float(p[1])) for n, p in d["keypoints"].items()},
                        joints3d=(
                            Skeleton3D(joints={n: np.asarray(p, float) for n, p in d["joints"].items()})
                            if "joints" in d
                            else None
                        ),
                        targets2d=(
                            {n: (float(p[0]), float(p[1])) for n, p in d["targets2d"].items()}
                            if "targets2d" in d
                            else None
                        ),
                        theta_deg=float(d["theta_deg"]) if "theta_deg" in d else None,
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError, IndexError) as err:
                raise LabelFormatError(f"bad lifter record: {err}", line=lineno) from err
    return out


INPUT_JOINTS_DEFAULT = JOINTS_16


@dataclass
class LifterConfig:
    volume_dims: tuple[int, int, int] = (8, 8, 8)
    joint_names: tuple[str, ...] = JOINTS_16
    input_joints: tuple[str, ...] = INPUT_JOINTS_DEFAULT
    hidden: int = 96
    lr: float = 1e-3
    epochs: int = 40
    batch_per_source: int = 16  # equal sampling from each supervision source
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    margin: float = 0.75

    def to_dict(self) -> dict:
        return {
            "volume_dims": list(self.volume_dims),
            "joint_names": list(self.joint_names),
            "input_joints": list(self.input_joints),
            "hidden": self.hidden,
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_per_source": self.batch_per_source,
            "lambda_2d": self.weights.lambda_2d,
            "lambda_3d": self.weights.lambda_3d,
            "lambda_ori": self.weights.lambda_ori,
            "seed": self.seed,
            "margin": self.margin,
        }


@dataclass
class LifterResult:
    net: DenseNet
    axis_maps: AxisMaps
    config: LifterConfig
    loss_trace: list[float] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    degenerate_count: int = 0


def _features(samples, joint_names) -> np.ndarray:
    return np.stack([keypoints_to_features(s.keypoints, joint_order=joint_names) for s in samples])


def _gt3d_array(samples, joint_names, axis_maps) -> np.ndarray:
    out = np.zeros((len(samples), len(joint_names), 3))
    for i, s in enumerate(samples):
        for j, name in enumerate(joint_names):
            out[i, j] = axis_maps.to_heatmap(s.joints3d.joint(name))
    return out


def _gt2d_array(samples, joint_names, axis_maps) -> np.ndarray:
    out = np.zeros((len(samples), len(joint_names), 2))
    for i, s in enumerate(samples):
        for j, name in enumerate(joint_names):
            x, y = s.targets2d[name]
            mapped = axis_maps.to_heatmap(np.array([x, y, 0.0]))
            out[i, j] = mapped[:2]
    return out


class _PoolSampler:
    """Cycles through a shuffled pool, reshuffling each wrap; seed-deterministic."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        out = []
        while k > 0:
            avail = self.n - self.pos
            grab = min(avail, k)
            out.append(self.order[self.pos : self.pos + grab])
            self.pos += grab
            k -= grab
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
        return np.concatenate(out)


def train_lifter(
    pool3d: list[LifterSample],
    pool2d: list[LifterSample],
    pool_ori: list[LifterSample],
    cfg: LifterConfig,
) -> LifterResult:
    """Train the toy lifter under the weighted triple-source loss.

    Batches draw the same number of samples from each nonempty source. The
    orientation term masks degenerate chest estimates instead of failing.
    """
    if not pool3d:
        raise ValueError("the 3-D supervision source must be nonempty")
    names = cfg.joint_names
    dims = cfg.volume_dims
    k = len(names)
    n_in = 2 * len(cfg.input_joints)
    vol = int(np.prod(dims))
    axis_maps = AxisMaps.for_dims(dims, cfg.margin)
    joint_idx = {n: i for i, n in enumerate(names)}

    f3d = _features(pool3d, cfg.input_joints)
    gt3d = _gt3d_array(pool3d, names, axis_maps)
    f2d = _features(pool2d, cfg.input_joints) if pool2d else np.zeros((0, n_in))
    gt2d = _gt2d_array(pool2d, names, axis_maps) if pool2d else np.zeros((0, k, 2))
    fori = _features(pool_ori, cfg.input_joints) if pool_ori else np.zeros((0, n_in))
    thetas = np.array([s.theta_deg for s in pool_ori]) if pool_ori else np.zeros(0)

    net = DenseNet.init([n_in, cfg.hidden, k * vol], seed=cfg.seed)
    opt = Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    samplers = {
        "pose3d": _PoolSampler(len(pool3d), rng),
        "pose2d": _PoolSampler(len(pool2d), rng) if pool2d else None,
        "orient": _PoolSampler(len(pool_ori), rng) if pool_ori else None,
    }
    result = LifterResult(net=net, axis_maps=axis_maps, config=cfg)
    bps = cfg.batch_per_source
    steps_per_epoch = max(1, len(pool3d) // bps)
    w = cfg.weights

    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for step in range(steps_per_epoch):
            i3 = samplers["pose3d"].take(bps)
            i2 = samplers["pose2d"].take(bps) if samplers["pose2d"] else np.zeros(0, int)
            io = samplers["orient"].take(bps) if samplers["orient"] else np.zeros(0, int)
            feats = np.concatenate([f3d[i3], f2d[i2], fori[io]])
            b = feats.shape[0]
            n3, n2 = len(i3), len(i2)

            mask3 = np.zeros(b)
            mask3[:n3] = 1.0
            mask2 = np.zeros(b)
            mask2[n3 : n3 + n2] = 1.0
            masko = np.zeros(b)
            masko[n3 + n2 :] = 1.0

            gt3 = np.zeros((b, k, 3))
            gt3[:n3] = gt3d[i3]
            gt2 = np.zeros((b, k, 2))
            if n2:
                gt2[n3 : n3 + n2] = gt2d[i2]
            th = np.zeros(b)
            if len(io):
                th[n3 + n2 :] = thetas[io]

            params = [Var(p) for p in net.parameters()]
            logits = net.forward(Var(feats), params=params).reshape(b, k, vol)
            probs = ad.softmax(logits, axis=-1)
            xs, ys, zs = soft_argmax_vars(probs, dims)

            loss = loss_3d_var(xs, ys, zs, gt3, mask3) * w.lambda_3d
            if n2:
                loss = loss + loss_2d_var(xs, ys, gt2, mask2) * w.lambda_2d
            if len(io):
                ori, n_deg = orientation_loss_var(xs, ys, zs, joint_idx, th, masko)
                loss = loss + ori * w.lambda_ori
                result.degenerate_count += n_deg
            loss = loss * (1.0 / b)

            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}: {value}")
            loss.backward()
            opt.step(net.parameters(), [p.grad for p in params])
            result.loss_trace.append(value)
            epoch_loss += value
        result.epoch_losses.append(epoch_loss / steps_per_epoch)
    return result


def predict_poses(
    net: DenseNet,
    samples: list[LifterSample],
    cfg: LifterConfig,
    axis_maps: AxisMaps,
    units: str = "camera",
) -> list[PoseEstimate]:
    """Soft-argmax joint estimates for each sample, in camera or heatmap units."""
    names = cfg.joint_names
    dims = cfg.volume_dims
    vol = int(np.prod(dims))
    feats = _features(samples, cfg.input_joints)
    logits = net.predict(feats).reshape(len(samples), len(names), vol)
    z = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=-1, keepdims=True)
    gx, gy, gz = (g for g in _grids(dims))
    xs = probs @ gx
    ys = probs @ gy
    zs = probs @ gz
    out = []
    for i in range(len(samples)):
        joints = {}
        for j, name in enumerate(names):
            p = np.array([xs[i, j], ys[i, j], zs[i, j]])
            joints[name] = axis_maps.to_camera(p) if units == "camera" else p
        out.append(PoseEstimate(joints=joints))
    return out


def _grids(dims):
    from .integral import coordinate_grids

    return coordinate_grids(dims)


def evaluate_lifter(
    net: DenseNet,
    eval_samples: list[LifterSample],
    cfg: LifterConfig,
    axis_maps: AxisMaps,
    units: str = "camera",
    with_pa: bool = True,
) -> PoseMetricReport:
    """Aggregate MPJPE report over an evaluation set with 3-D ground truth."""
    poses = predict_poses(net, eval_samples, cfg, axis_maps, units=units)
    reports = []
    pa_values = []
    for pose, sample in zip(poses, eval_samples):
        gt = sample.joints3d
        if units == "heatmap":
            gt = Skeleton3D(
                joints={n: axis_maps.to_heatmap(gt.joint(n)) for n in cfg.joint_names}
            )
        reports.append(mpjpe(pose, gt, units=units))
        if with_pa:
            pa_values.append(pa_mpjpe(pose, gt))
    overall = float(np.mean([r.mpjpe for r in reports]))
    per_joint = {
        key: float(np.mean([r.per_joint[key] for r in reports])) for key in reports[0].per_joint
    }
    per_axis = {
        ax: float(np.mean([r.per_axis[ax] for r in reports])) for ax in ("X", "Y", "Z")
    }
    return PoseMetricReport(
        mpjpe=overall,
        per_joint=per_joint,
        per_axis=per_axis,
        pa_mpjpe=float(np.mean(pa_values)) if pa_values else None,
        units=units,
        extra={"n": len(eval_samples)},
    )


# -- synthetic benchmark -------------------------------------------------------


@dataclass
class LifterBenchmark:
    pool3d: list[LifterSample]
    pool2d: list[LifterSample]
    pool_ori: list[LifterSample]
    eval_set: list[LifterSample]


def build_lifter_benchmark(
    n_total: int = 1200,
    n_eval: int = 300,
    noise_sigma: float = 0.03,
    seed: int = 0,
    joint_names: tuple[str, ...] = JOINTS_16,
    source3d_spread_deg: float = 8.0,
) -> LifterBenchmark:
    """Benchmark with depth supervision withheld from half the samples.

    The 3-D source (half of n_total) covers only a narrow band of near-frontal
    orientations, like an indoor motion-capture corpus; the 2-D and
    orientation sources (a quarter each) and the eval set are uniform, like
    in-the-wild data. Depth structure outside the band is only observable
    through the orientation labels.
    """

    def keep(joints):
        return {n: joints[n] for n in joint_names}

    n3 = n_total // 2
    n2 = n_total // 4
    no = n_total - n3 - n2

    rng3 = np.random.default_rng(seed * 10 + 1)
    pool3d = []
    for i in range(n3):
        theta = float((rng3.normal(180.0, source3d_spread_deg)) % 360.0)
        skel = make_body(rng3, theta)
        ppu = float(rng3.uniform(20.0, 80.0))
        center = (float(rng3.uniform(60.0, 200.0)), float(rng3.uniform(60.0, 200.0)))
        kps = project_orthographic(skel, ppu, center, rng=rng3, noise_sigma=noise_sigma)
        pool3d.append(
            LifterSample(
                instance_id=f"mocap_{i:06d}",
                keypoints=kps,
                joints3d=Skeleton3D(joints=keep(skel.joints)),
            )
        )

    def make(n, sub_seed):
        spec = SyntheticSpec(
            n_instances=n, theta_dist="uniform", noise_sigma=noise_sigma, seed=seed * 10 + sub_seed
        )
        return generate_synthetic(spec)

    ds2 = make(n2, 2)
    dso = make(no, 3)
    dse = make(n_eval, 4)

    pool2d = [
        LifterSample(
            instance_id=r.instance_id,
            keypoints=k,
            targets2d={n: (float(s.joints[n][0]), float(s.joints[n][1])) for n in joint_names},
        )
        for r, k, s in zip(ds2.manifest.records, ds2.keypoints2d, ds2.skeletons)
    ]
    pool_ori = [
        LifterSample(
            instance_id=r.instance_id,
            keypoints=k,
            theta_deg=r.orientation.theta_deg,
        )
        for r, k in zip(dso.manifest.records, dso.keypoints2d)
    ]
    eval_set = [
        LifterSample(
            instance_id=r.instance_id,
            keypoints=k,
            joints3d=Skeleton3D(joints=keep(s.joints)),
        )
        for r, k, s in zip(dse.manifest.records, dse.keypoints2d, dse.skeletons)
    ]
    return LifterBenchmark(pool3d=pool3d, pool2d=pool2d, pool_ori=pool_ori, eval_set=eval_set)
