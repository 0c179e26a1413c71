"""Command-line entry point binding all modules.

Exit codes: 0 success, 1 validation error (bad arguments or inputs),
2 runtime failure. Every run writes a config-echo JSON into the output
directory for reproducibility; seeded artifacts carry the seed in their
filename.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bins as bins_mod
from . import data as data_mod
from . import hboe as hboe_mod
from . import lifter as lifter_mod
from .geometry import N_BINS
from .integral import LossWeights
from .nnet import load_checkpoint, save_checkpoint

TABLE_SIGMAS = (1.0, 2.0, 3.0, 4.0, 6.0, 8.0)


class CliError(Exception):
    """Validation failure; maps to exit code 1."""


def _echo_config(out_dir: Path, subcommand: str, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {k: v for k, v in vars(args).items() if k != "func"}
    payload["subcommand"] = subcommand
    with open(out_dir / f"{subcommand.replace('-', '_')}_config.json", "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)


def _load_labeled_features(data_path: str):
    """Resolve a manifest path (labels file or synth output dir) to features."""
    path = Path(data_path)
    if path.is_dir():
        labels_path = path / "labels.jsonl"
        kps_path = path / "keypoints2d.jsonl"
    else:
        labels_path = path
        kps_path = path.parent / "keypoints2d.jsonl"
    if not labels_path.is_file():
        raise CliError(f"labels file not found: {labels_path}")
    if not kps_path.is_file():
        raise CliError(f"keypoints file not found next to labels: {kps_path}")
    manifest = data_mod.read_labels(labels_path)
    ids, kps = data_mod.read_keypoints2d(kps_path)
    by_id = dict(zip(ids, kps))
    feats, bins_arr, thetas, splits, inst = [], [], [], [], []
    for r in manifest.records:
        if r.instance_id not in by_id:
            raise CliError(f"no keypoints for instance {r.instance_id}")
        feats.append(data_mod.keypoints_to_features(by_id[r.instance_id]))
        bins_arr.append(r.orientation.bin)
        thetas.append(r.orientation.theta_deg)
        splits.append(r.split)
        inst.append(r.instance_id)
    return (
        np.stack(feats),
        np.array(bins_arr),
        np.array(thetas),
        np.array(splits, dtype=object),
        inst,
        manifest,
    )


# -- subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "synth", args)
    if args.kind == "hboe":
        spec = data_mod.SyntheticSpec(
            n_instances=args.n,
            theta_dist=args.theta_dist,
            noise_sigma=args.noise,
            seed=args.seed,
            instances_per_image=args.instances_per_image,
            train_fraction=args.train_fraction,
        )
        ds = data_mod.generate_synthetic(spec)
        ids = [r.instance_id for r in ds.manifest.records]
        data_mod.write_labels(ds.manifest, out_dir / "labels.jsonl")
        data_mod.write_keypoints2d(ds.keypoints2d, ids, out_dir / "keypoints2d.jsonl")
        data_mod.write_skeletons(ds.skeletons, ids, out_dir / "skeletons.jsonl")
        print(f"wrote {len(ids)} instances to {out_dir}")
    else:
        bench = lifter_mod.build_lifter_benchmark(
            n_total=args.n, n_eval=args.n_eval, noise_sigma=args.noise, seed=args.seed
        )
        lifter_mod.write_lifter_samples(bench.pool3d, out_dir / "h36m_like.jsonl")
        lifter_mod.write_lifter_samples(bench.pool2d, out_dir / "pose2d.jsonl")
        lifter_mod.write_lifter_samples(bench.pool_ori, out_dir / "orient.jsonl")
        lifter_mod.write_lifter_samples(bench.eval_set, out_dir / "eval.jsonl")
        print(
            f"wrote lifter benchmark to {out_dir} "
            f"(3d={len(bench.pool3d)}, 2d={len(bench.pool2d)}, "
            f"ori={len(bench.pool_ori)}, eval={len(bench.eval_set)})"
        )
    return 0


def cmd_train_hboe(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "train-hboe", args)
    feats, bins_arr, thetas, splits, _, _ = _load_labeled_features(args.data)
    train_mask = splits == "train"
    if not train_mask.any():
        train_mask = np.ones(len(bins_arr), dtype=bool)
    cfg = hboe_mod.TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        sigma=args.sigma,
        seed=args.seed,
        hidden=args.hidden,
    )
    model = hboe_mod.make_model(feats.shape[1], cfg)
    result = hboe_mod.train_hboe(feats[train_mask], bins_arr[train_mask], model, cfg)
    ckpt = Path(args.out) if args.out else out_dir / f"hboe_s{args.seed}.ckpt.json"
    save_checkpoint(
        ckpt,
        model,
        cfg.to_dict(),
        extra={"kind": "hboe", "final_epoch_loss": result.epoch_losses[-1]},
    )
    with open(out_dir / f"hboe_s{args.seed}_loss_trace.csv", "w") as f:
        f.write("epoch,mean_loss\n")
        for i, v in enumerate(result.epoch_losses):
            f.write(f"{i},{v:.8f}\n")
    print(f"trained {cfg.epochs} epochs; final epoch loss {result.epoch_losses[-1]:.6f}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval_hboe(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "eval-hboe", args)
    model, cfg, extra = load_checkpoint(args.ckpt)
    if extra.get("kind") != "hboe":
        raise CliError(f"not an orientation-head checkpoint: {args.ckpt}")
    feats, bins_arr, thetas, splits, inst, _ = _load_labeled_features(args.data)
    eval_mask = splits == "test"
    if args.split == "all" or not eval_mask.any():
        eval_mask = np.ones(len(bins_arr), dtype=bool)
    preds = hboe_mod.predict_angles(model, feats[eval_mask], rule=args.decode)
    gts = thetas[eval_mask]
    report = bins_mod.evaluate(preds, gts, with_curve=True, with_quadrants=True)

    (out_dir / "report.txt").write_text(report.to_text())
    (out_dir / "report.csv").write_text(report.to_csv())
    (out_dir / "curve.csv").write_text(report.curve_csv())
    ids = [i for i, keep in zip(inst, eval_mask) if keep]
    with open(out_dir / "preds.csv", "w") as f:
        f.write("instance_id,pred_deg,gt_deg\n")
        for iid, p, g in zip(ids, preds, gts):
            f.write(f"{iid},{p:.6f},{g:.6f}\n")
    summary = {
        "sigma": cfg.get("sigma"),
        "seed": cfg.get("seed"),
        "decode": args.decode,
        "n": report.n,
        "mae_deg": report.mae_deg,
        "accuracy": {str(k): v for k, v in report.accuracy.items()},
    }
    with open(out_dir / "eval.json", "w") as f:
        json.dump(summary, f, indent=2)
    print(report.to_text(), end="")
    return 0


def cmd_train_lifter(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "train-lifter", args)
    pool3d = lifter_mod.read_lifter_samples(args.h36m_like)
    pool2d = lifter_mod.read_lifter_samples(args.pose2d) if args.pose2d else []
    pool_ori = lifter_mod.read_lifter_samples(args.orient) if args.orient else []
    cfg = lifter_mod.LifterConfig(
        hidden=args.hidden,
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        weights=LossWeights(
            lambda_2d=args.lambda_2d, lambda_3d=args.lambda_3d, lambda_ori=args.lambda_ori
        ),
    )
    result = lifter_mod.train_lifter(pool3d, pool2d, pool_ori, cfg)
    ckpt = Path(args.out) if args.out else out_dir / f"lifter_s{args.seed}.ckpt.json"
    save_checkpoint(
        ckpt,
        result.net,
        cfg.to_dict(),
        extra={
            "kind": "lifter",
            "axis_maps": result.axis_maps.to_dict(),
            "degenerate_count": result.degenerate_count,
            "final_epoch_loss": result.epoch_losses[-1],
        },
    )
    print(
        f"trained {cfg.epochs} epochs; final epoch loss {result.epoch_losses[-1]:.6f}; "
        f"degenerate orientation samples masked: {result.degenerate_count}"
    )
    print(f"checkpoint: {ckpt}")
    return 0


def _lifter_from_checkpoint(ckpt_path):
    net, cfg_dict, extra = load_checkpoint(ckpt_path)
    if extra.get("kind") != "lifter":
        raise CliError(f"not a lifter checkpoint: {ckpt_path}")
    cfg = lifter_mod.LifterConfig(
        volume_dims=tuple(cfg_dict["volume_dims"]),
        joint_names=tuple(cfg_dict["joint_names"]),
        input_joints=tuple(cfg_dict.get("input_joints", cfg_dict["joint_names"])),
        hidden=cfg_dict["hidden"],
        lr=cfg_dict["lr"],
        epochs=cfg_dict["epochs"],
        batch_per_source=cfg_dict["batch_per_source"],
        weights=LossWeights(
            lambda_2d=cfg_dict["lambda_2d"],
            lambda_3d=cfg_dict["lambda_3d"],
            lambda_ori=cfg_dict["lambda_ori"],
        ),
        seed=cfg_dict["seed"],
        margin=cfg_dict["margin"],
    )
    maps = lifter_mod.AxisMaps.from_dict(extra["axis_maps"])
    return net, cfg, maps


def cmd_eval_pose(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "eval-pose", args)
    net, cfg, maps = _lifter_from_checkpoint(args.ckpt)
    eval_samples = lifter_mod.read_lifter_samples(args.gt)
    missing = [s.instance_id for s in eval_samples if s.joints3d is None]
    if missing:
        raise CliError(f"eval samples without 3-D ground truth: {missing[:3]}...")
    report = lifter_mod.evaluate_lifter(
        net, eval_samples, cfg, maps, units=args.units, with_pa=(args.protocol == "pa")
    )
    headline = report.pa_mpjpe if args.protocol == "pa" else report.mpjpe
    with open(out_dir / "pose_report.csv", "w") as f:
        joints = list(report.per_joint)
        f.write("metric," + ",".join(joints) + ",X,Y,Z,overall\n")
        f.write(
            "mpjpe,"
            + ",".join(f"{report.per_joint[j]:.6f}" for j in joints)
            + f",{report.per_axis['X']:.6f},{report.per_axis['Y']:.6f}"
            + f",{report.per_axis['Z']:.6f},{report.mpjpe:.6f}\n"
        )
    summary = {
        "protocol": args.protocol,
        "units": report.units,
        "mpjpe": report.mpjpe,
        "pa_mpjpe": report.pa_mpjpe,
        "per_axis": report.per_axis,
        "n": report.extra.get("n"),
    }
    with open(out_dir / "pose_eval.json", "w") as f:
        json.dump(summary, f, indent=2)
    label = "PA-MPJPE" if args.protocol == "pa" else "MPJPE"
    print(f"{label} ({report.units} units): {headline:.6f}")
    print(f"per-axis X {report.per_axis['X']:.6f} Y {report.per_axis['Y']:.6f} Z {report.per_axis['Z']:.6f}")
    return 0


def cmd_convert(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "convert", args)
    ids, skels = data_mod.read_skeletons(args.poses)
    results = data_mod.convert_pose_dataset_to_records(ids, skels)
    kept, skipped = results
    manifest = data_mod.DatasetManifest(records=kept)
    data_mod.write_labels(manifest, out_dir / "labels.jsonl")
    with open(out_dir / "skipped.jsonl", "w") as f:
        for item in skipped:
            f.write(json.dumps(item) + "\n")
    print(f"converted {len(kept)} poses; skipped {len(skipped)} (see skipped.jsonl)")
    return 0


def cmd_stats(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "stats", args)
    labels_path = Path(args.data)
    if labels_path.is_dir():
        labels_path = labels_path / "labels.jsonl"
    manifest = data_mod.read_labels(labels_path)
    stats = manifest.stats(resolution_bin_width=args.resolution_bin_width)
    (out_dir / "orientation_hist.csv").write_text(stats.orientation_csv())
    (out_dir / "resolution_hist.csv").write_text(stats.resolution_csv())
    print(f"{len(manifest)} records; histograms written to {out_dir}")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "report", args)
    wrote_something = False

    if args.preds:
        rows = []
        for item in args.preds:
            name, _, path = item.rpartition("=")
            name = name or Path(path).stem
            preds, gts = _read_preds_csv(path)
            report = bins_mod.evaluate(
                preds, gts, with_curve=args.curve, with_quadrants=(args.breakdown == "quadrant")
            )
            rows.append((name, report))
        with open(out_dir / "summary.csv", "w") as f:
            f.write("name,n,mae_deg,acc_5,acc_15,acc_22.5,acc_30,acc_45\n")
            for name, rep in rows:
                f.write(
                    f"{name},{rep.n},{rep.mae_deg:.6f},"
                    + ",".join(f"{rep.accuracy[t]:.6f}" for t in (5.0, 15.0, 22.5, 30.0, 45.0))
                    + "\n"
                )
        wrote_something = True
        if args.breakdown == "quadrant":
            with open(out_dir / "quadrant_breakdown.csv", "w") as f:
                f.write("name,quadrant,n,mae_deg,acc_5,acc_15,acc_30\n")
                for name, rep in rows:
                    for quadrant in bins_mod.QUADRANTS:
                        sub = (rep.per_quadrant or {}).get(quadrant)
                        if sub is None:
                            continue
                        f.write(
                            f"{name},{quadrant},{sub.n},{sub.mae_deg:.6f},"
                            f"{sub.accuracy[5.0]:.6f},{sub.accuracy[15.0]:.6f},"
                            f"{sub.accuracy[30.0]:.6f}\n"
                        )
        if args.curve:
            for name, rep in rows:
                (out_dir / f"curve_{name}.csv").write_text(rep.curve_csv())

    if args.sigma_sweep:
        entries = []
        for path in sorted(Path(args.sigma_sweep).glob("**/eval.json")):
            with open(path) as f:
                entries.append(json.load(f))
        if not entries:
            raise CliError(f"no eval.json files under {args.sigma_sweep}")
        entries.sort(key=lambda e: e.get("sigma", 0.0))
        with open(out_dir / "sigma_sweep.csv", "w") as f:
            f.write("sigma,mae_deg,acc_5,acc_15,acc_30\n")
            for e in entries:
                acc = e["accuracy"]
                f.write(
                    f"{e['sigma']:g},{e['mae_deg']:.6f},{acc['5.0']:.6f},"
                    f"{acc['15.0']:.6f},{acc['30.0']:.6f}\n"
                )
        wrote_something = True

    if not wrote_something:
        raise CliError("report needs --preds and/or --sigma-sweep")
    print(f"report written to {out_dir}")
    return 0


def _read_preds_csv(path):
    preds, gts = [], []
    try:
        with open(path) as f:
            header = f.readline().strip().split(",")
            pi = header.index("pred_deg")
            gi = header.index("gt_deg")
            for line in f:
                parts = line.strip().split(",")
                if len(parts) <= max(pi, gi):
                    continue
                preds.append(float(parts[pi]))
                gts.append(float(parts[gi]))
    except (OSError, ValueError) as err:
        raise CliError(f"bad predictions file {path}: {err}") from err
    if not preds:
        raise CliError(f"no prediction rows in {path}")
    return preds, gts


def cmd_serve(args) -> int:
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, "serve", args)
    from .service import create_app

    labels_path = Path(args.data)
    if labels_path.is_dir():
        labels_path = labels_path / "labels.jsonl"
    app = create_app(
        manifest=labels_path,
        images_dir=args.images,
        labels_path=args.labels_out,
        session_ttl_seconds=args.session_ttl,
    )
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orientkit", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate synthetic datasets")
    p.add_argument("--kind", choices=("hboe", "lifter"), default="hboe")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-eval", type=int, default=300)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--theta-dist", choices=("uniform", "peaked"), default="uniform")
    p.add_argument("--instances-per-image", type=int, default=2)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-hboe", help="train the orientation head")
    p.add_argument("--data", required=True, help="labels.jsonl or synth output dir")
    p.add_argument("--sigma", type=float, default=4.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="checkpoint path")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_train_hboe)

    p = sub.add_parser("eval-hboe", help="evaluate an orientation-head checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--decode", choices=("argmax", "cmean"), default="argmax")
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval_hboe)

    p = sub.add_parser("train-lifter", help="train the 2-D-to-3-D lifter")
    p.add_argument("--h36m-like", required=True, help="3-D supervised samples")
    p.add_argument("--pose2d", default=None, help="2-D supervised samples")
    p.add_argument("--orient", default=None, help="orientation supervised samples")
    p.add_argument("--lambda-2d", type=float, default=1.0)
    p.add_argument("--lambda-3d", type=float, default=1.0)
    p.add_argument("--lambda-ori", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--hidden", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_train_lifter)

    p = sub.add_parser("eval-pose", help="evaluate a lifter checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--gt", required=True, help="eval samples with 3-D ground truth")
    p.add_argument("--protocol", choices=("mpjpe", "pa"), default="mpjpe")
    p.add_argument("--units", choices=("camera", "heatmap"), default="camera")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser("convert", help="convert 3-D poses to orientation labels")
    p.add_argument("--poses", required=True, help="skeleton JSONL")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="dataset histograms")
    p.add_argument("--data", required=True)
    p.add_argument("--resolution-bin-width", type=float, default=10.0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="format evaluation outputs")
    p.add_argument("--preds", action="append", default=[], help="[name=]preds.csv, repeatable")
    p.add_argument("--breakdown", choices=("quadrant",), default=None)
    p.add_argument("--curve", action="store_true")
    p.add_argument("--sigma-sweep", default=None, help="directory of eval.json files")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--data", required=True, help="labels.jsonl or synth output dir")
    p.add_argument("--images", default=None)
    p.add_argument("--labels-out", default="labels_out.jsonl")
    p.add_argument("--session-ttl", type=float, default=300.0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv) -> int:
    """Parse and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map to the validation exit code,
        # keep 0 for --help.
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (CliError, data_mod.LabelFormatError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
