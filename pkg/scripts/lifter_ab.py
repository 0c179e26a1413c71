"""Depth-from-orientation A/B: train the toy lifter with and without the
orientation loss on the benchmark where half the samples have no 3-D labels,
then compare Z-axis and overall pose error.

Usage: python scripts/lifter_ab.py [--out-dir runs/lifter_ab]
"""

import argparse
import json
import sys
from pathlib import Path

from orientkit.cli import run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/lifter_ab")
    parser.add_argument("--n", type=int, default=1200)
    parser.add_argument("--n-eval", type=int, default=300)
    parser.add_argument("--noise", type=float, default=0.03)
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--data-seed", type=int, default=0)
    parser.add_argument("--train-seed", type=int, default=1)
    args = parser.parse_args()

    base = Path(args.out_dir)
    data = base / "data"
    code = run(["synth", "--kind", "lifter", "--n", str(args.n), "--n-eval", str(args.n_eval),
                "--noise", str(args.noise), "--seed", str(args.data_seed),
                "--out-dir", str(data)])
    if code != 0:
        return code

    summaries = {}
    for lam in ("0.0", "0.1"):
        arm = base / f"lambda_ori_{lam}"
        ckpt = arm / "lifter.ckpt.json"
        code = run(["train-lifter",
                    "--h36m-like", str(data / "h36m_like.jsonl"),
                    "--pose2d", str(data / "pose2d.jsonl"),
                    "--orient", str(data / "orient.jsonl"),
                    "--lambda-ori", lam, "--epochs", str(args.epochs),
                    "--seed", str(args.train_seed), "--out", str(ckpt),
                    "--out-dir", str(arm)])
        if code != 0:
            return code
        code = run(["eval-pose", "--ckpt", str(ckpt), "--gt", str(data / "eval.jsonl"),
                    "--protocol", "mpjpe", "--out-dir", str(arm)])
        if code != 0:
            return code
        with open(arm / "pose_eval.json") as f:
            summaries[lam] = json.load(f)

    z0 = summaries["0.0"]["per_axis"]["Z"]
    z1 = summaries["0.1"]["per_axis"]["Z"]
    m0 = summaries["0.0"]["mpjpe"]
    m1 = summaries["0.1"]["mpjpe"]
    print(f"\nZ-axis MPJPE: {z0:.4f} -> {z1:.4f}  ({(z0 - z1) / z0 * 100:+.1f}% relative)")
    print(f"overall MPJPE: {m0:.4f} -> {m1:.4f}  ({(m1 - m0) / m0 * 100:+.1f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
