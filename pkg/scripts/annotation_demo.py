"""End-to-end annotation walkthrough without a browser: generate a small
dataset, stand the service up in-process, label a few instances through the
HTTP API, and print the resulting store and histogram.

Usage: python scripts/annotation_demo.py [--out-dir runs/annotation_demo]
"""

import argparse
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from orientkit.cli import run
from orientkit.service import create_app


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/annotation_demo")
    parser.add_argument("--n", type=int, default=6)
    args = parser.parse_args()

    base = Path(args.out_dir)
    data = base / "data"
    code = run(["synth", "--n", str(args.n), "--seed", "11", "--out-dir", str(data)])
    if code != 0:
        return code

    labels_out = base / "human_labels.jsonl"
    app = create_app(manifest=data / "labels.jsonl", labels_path=labels_out)
    client = TestClient(app)

    session = client.post("/sessions", json={"labeler_id": "demo"}).json()["session_id"]
    print(f"session: {session}")
    while True:
        resp = client.get("/instances/next", params={"session": session})
        if resp.status_code == 204:
            print("queue exhausted")
            break
        inst = resp.json()
        theta = (int(inst["instance_id"][-3:]) * 35) % 360 // 5 * 5
        post = client.post(
            "/labels",
            json={"instance_id": inst["instance_id"], "theta_deg": theta, "labeler_id": "demo"},
        )
        print(f"labeled {inst['instance_id']} at {theta:3d} deg -> {post.status_code}, "
              f"bin {post.json()['bin']}")
        gallery = client.get("/examples", params={"bin": post.json()["bin"]}).json()
        print(f"  gallery for that bin now has {len(gallery)} example(s)")

    print(f"\nprogress: {client.get('/progress', params={'session': session}).json()}")
    print(f"label store: {labels_out}")
    return run(["stats", "--data", str(labels_out), "--out-dir", str(base)])


if __name__ == "__main__":
    sys.exit(main())
