"""Width ablation for the circular-Gaussian target: train the orientation
head at each sigma in {1, 2, 3, 4, 6, 8} and collect one summary row per run.

Usage: python scripts/sigma_sweep.py [--out-dir runs/sigma_sweep] [--n 5000]
"""

import argparse
import sys
from pathlib import Path

from orientkit.cli import run

SIGMAS = (1.0, 2.0, 3.0, 4.0, 6.0, 8.0)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/sigma_sweep")
    parser.add_argument("--n", type=int, default=5000)
    parser.add_argument("--noise", type=float, default=0.02)
    parser.add_argument("--epochs", type=int, default=80)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    base = Path(args.out_dir)
    data = base / "data"
    code = run(["synth", "--n", str(args.n), "--noise", str(args.noise),
                "--seed", str(args.seed), "--out-dir", str(data)])
    if code != 0:
        return code

    for sigma in SIGMAS:
        run_dir = base / f"sigma_{sigma:g}"
        code = run(["train-hboe", "--data", str(data), "--sigma", str(sigma),
                    "--lr", "1e-3", "--epochs", str(args.epochs),
                    "--seed", str(args.seed), "--out-dir", str(run_dir)])
        if code != 0:
            return code
        code = run(["eval-hboe", "--ckpt", str(run_dir / f"hboe_s{args.seed}.ckpt.json"),
                    "--data", str(data), "--out-dir", str(run_dir)])
        if code != 0:
            return code

    code = run(["report", "--sigma-sweep", str(base), "--out-dir", str(base)])
    if code == 0:
        print((base / "sigma_sweep.csv").read_text())
    return code


if __name__ == "__main__":
    sys.exit(main())
