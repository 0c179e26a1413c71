import json
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import pytest
from fastapi.testclient import TestClient

from orientkit.data import (
    DatasetManifest,
    LabelRecord,
    read_labels,
    recover_label_lines,
)
from orientkit.geometry import OrientationLabel
from orientkit.service import AssignmentState, LabelStore, create_app

UTC = timezone.utc


def make_manifest(n=3):
    records = [
        LabelRecord(
            image_ref=f"img_{i // 2:03d}.png",
            instance_id=f"inst_{i:03d}",
            bbox=(0.0, 0.0, 50.0, 100.0),
            orientation=OrientationLabel.from_theta(0.0),
            labeler_id="seed",
            timestamp=datetime(2026, 1, 1, tzinfo=UTC),
            source="synthetic",
        )
        for i in range(n)
    ]
    return DatasetManifest(records=records)


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t

    def advance(self, dt):
        self.t += dt


@pytest.fixture()
def app_env(tmp_path):
    clock = FakeClock()
    app = create_app(
        manifest=make_manifest(3),
        images_dir=tmp_path / "images",
        labels_path=tmp_path / "labels.jsonl",
        session_ttl_seconds=10.0,
        clock=clock,
    )
    client = TestClient(app)
    return client, clock, tmp_path


def new_session(client, labeler="alice"):
    resp = client.post("/sessions", json={"labeler_id": labeler})
    assert resp.status_code == 201
    return resp.json()["session_id"]


class TestAssignmentFlow:
    def test_three_instances_then_204(self, app_env):
        client, _, _ = app_env
        sid = new_session(client)
        seen = set()
        for _ in range(3):
            resp = client.get("/instances/next", params={"session": sid})
            assert resp.status_code == 200
            body = resp.json()
            assert set(body) >= {"instance_id", "image_url", "crop_url", "bbox", "image_ref"}
            seen.add(body["instance_id"])
        assert len(seen) == 3
        resp = client.get("/instances/next", params={"session": sid})
        assert resp.status_code == 204

    def test_unknown_session_404(self, app_env):
        client, _, _ = app_env
        resp = client.get("/instances/next", params={"session": "nope"})
        assert resp.status_code == 404

    def test_two_sessions_disjoint(self, app_env):
        client, _, _ = app_env
        s1, s2 = new_session(client, "a"), new_session(client, "b")
        got1 = {client.get("/instances/next", params={"session": s1}).json()["instance_id"]}
        got2 = {client.get("/instances/next", params={"session": s2}).json()["instance_id"]}
        got1.add(client.get("/instances/next", params={"session": s1}).json()["instance_id"])
        assert got1.isdisjoint(got2)

    def test_expired_session_requeues(self, app_env):
        client, clock, _ = app_env
        s1 = new_session(client, "a")
        first = client.get("/instances/next", params={"session": s1}).json()["instance_id"]
        clock.advance(11.0)  # beyond ttl
        s2 = new_session(client, "b")
        served = set()
        while True:
            resp = client.get("/instances/next", params={"session": s2})
            if resp.status_code == 204:
                break
            served.add(resp.json()["instance_id"])
        assert first in served
        # The expired session is gone.
        resp = client.get("/instances/next", params={"session": s1})
        assert resp.status_code == 404

    def test_labeled_instance_not_requeued_after_expiry(self, app_env):
        client, clock, _ = app_env
        s1 = new_session(client, "a")
        inst = client.get("/instances/next", params={"session": s1}).json()["instance_id"]
        assert client.post(
            "/labels", json={"instance_id": inst, "theta_deg": 45, "labeler_id": "a"}
        ).status_code == 201
        clock.advance(11.0)
        s2 = new_session(client, "b")
        served = set()
        while True:
            resp = client.get("/instances/next", params={"session": s2})
            if resp.status_code == 204:
                break
            served.add(resp.json()["instance_id"])
        assert inst not in served


class TestLabels:
    def test_valid_label_persisted_with_bin(self, app_env):
        client, _, tmp = app_env
        resp = client.post(
            "/labels", json={"instance_id": "inst_000", "theta_deg": 175, "labeler_id": "x"}
        )
        assert resp.status_code == 201
        assert resp.json()["bin"] == 35
        stored = read_labels(tmp / "labels.jsonl")
        assert stored.records[0].orientation.theta_deg == 175.0
        assert stored.records[0].source == "human"

    def test_non_multiple_of_five_422(self, app_env):
        client, _, _ = app_env
        resp = client.post(
            "/labels", json={"instance_id": "inst_000", "theta_deg": 172, "labeler_id": "x"}
        )
        assert resp.status_code == 422

    def test_out_of_range_422(self, app_env):
        client, _, _ = app_env
        for theta in (360, -5, 400):
            resp = client.post(
                "/labels", json={"instance_id": "inst_000", "theta_deg": theta, "labeler_id": "x"}
            )
            assert resp.status_code == 422

    def test_unknown_instance_404(self, app_env):
        client, _, _ = app_env
        resp = client.post(
            "/labels", json={"instance_id": "ghost", "theta_deg": 10, "labeler_id": "x"}
        )
        assert resp.status_code == 404

    def test_resubmission_overwrites(self, app_env):
        client, _, tmp = app_env
        for theta in (10, 15):
            resp = client.post(
                "/labels", json={"instance_id": "inst_001", "theta_deg": theta, "labeler_id": "x"}
            )
            assert resp.status_code == 201
        resp = client.get("/examples", params={"bin": 2})
        assert resp.json() == []
        resp = client.get("/examples", params={"bin": 3})
        assert [e["instance_id"] for e in resp.json()] == ["inst_001"]
        # The log keeps both lines; the latest wins on read.
        lines = (tmp / "labels.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_every_persisted_label_satisfies_invariants(self, app_env):
        client, _, tmp = app_env
        for i, theta in enumerate((0, 5, 355, 180)):
            client.post(
                "/labels",
                json={"instance_id": f"inst_{i % 3:03d}", "theta_deg": theta, "labeler_id": "x"},
            )
        # The store is a log: resubmissions append, so parse log-style.
        lines, dropped = recover_label_lines(tmp / "labels.jsonl")
        assert dropped == 0
        assert len(lines) == 4
        for d in lines:
            record = LabelRecord.from_json_dict(d)
            OrientationLabel(theta_deg=record.orientation.theta_deg, bin=record.orientation.bin)


class TestExamples:
    def test_empty_bin(self, app_env):
        client, _, _ = app_env
        assert client.get("/examples", params={"bin": 40}).json() == []

    def test_newest_first_with_limit(self, tmp_path):
        manifest = make_manifest(6)
        app = create_app(manifest=manifest, labels_path=tmp_path / "l.jsonl")
        client = TestClient(app)
        for i in range(5):
            client.post(
                "/labels",
                json={"instance_id": f"inst_{i:03d}", "theta_deg": 90, "labeler_id": f"u{i}"},
            )
        resp = client.get("/examples", params={"bin": 18, "limit": 3})
        ids = [e["instance_id"] for e in resp.json()]
        assert len(ids) == 3
        assert ids == ["inst_004", "inst_003", "inst_002"]

    def test_bin_out_of_range_422(self, app_env):
        client, _, _ = app_env
        assert client.get("/examples", params={"bin": 72}).status_code == 422
        assert client.get("/examples", params={"bin": -1}).status_code == 422


class TestCrops:
    def test_serves_bytes_and_404(self, app_env):
        client, _, tmp = app_env
        (tmp / "images").mkdir()
        (tmp / "images" / "inst_000.png").write_bytes(b"\x89PNG fake")
        resp = client.get("/crops/inst_000")
        assert resp.status_code == 200
        assert resp.content.startswith(b"\x89PNG")
        assert client.get("/crops/inst_999").status_code == 404


class TestConcurrency:
    def test_exclusive_assignment_under_100_sessions(self):
        n_instances = 400
        state = AssignmentState([f"i{k}" for k in range(n_instances)], ttl_seconds=60.0)
        sessions = [state.create_session(f"labeler{j}") for j in range(100)]
        grabbed: list[list[str]] = [[] for _ in sessions]

        def worker(idx):
            while True:
                inst = state.next_instance(sessions[idx].session_id)
                if inst is None:
                    return
                grabbed[idx].append(inst)

        with ThreadPoolExecutor(max_workers=32) as pool:
            list(pool.map(worker, range(100)))

        all_instances = [i for chunk in grabbed for i in chunk]
        assert len(all_instances) == n_instances
        assert len(set(all_instances)) == n_instances  # no instance served twice

    def test_concurrent_label_posts_keep_store_parseable(self, tmp_path):
        manifest = make_manifest(60)
        app = create_app(manifest=manifest, labels_path=tmp_path / "labels.jsonl")
        client = TestClient(app)

        def submit(i):
            resp = client.post(
                "/labels",
                json={"instance_id": f"inst_{i:03d}", "theta_deg": (i * 5) % 360,
                      "labeler_id": f"u{i % 7}"},
            )
            assert resp.status_code == 201

        with ThreadPoolExecutor(max_workers=16) as pool:
            list(pool.map(submit, range(60)))
        stored = read_labels(tmp_path / "labels.jsonl")
        assert len(stored.records) == 60


class TestCrashRecovery:
    def test_truncated_tail_recovered_and_appends_continue(self, tmp_path):
        labels_path = tmp_path / "labels.jsonl"
        manifest = make_manifest(4)
        app = create_app(manifest=manifest, labels_path=labels_path)
        client = TestClient(app)
        for i in range(3):
            client.post(
                "/labels",
                json={"instance_id": f"inst_{i:03d}", "theta_deg": 20, "labeler_id": "x"},
            )
        # Simulate a crash mid-append: torn trailing line.
        blob = labels_path.read_bytes()
        labels_path.write_bytes(blob + b'{"instance_id": "inst_003", "theta')

        lines, dropped = recover_label_lines(labels_path)
        assert len(lines) == 3
        assert dropped > 0

        # A restarted service recovers the prefix and keeps appending cleanly.
        app2 = create_app(manifest=manifest, labels_path=labels_path)
        client2 = TestClient(app2)
        resp = client2.post(
            "/labels", json={"instance_id": "inst_003", "theta_deg": 30, "labeler_id": "x"}
        )
        assert resp.status_code == 201
        stored = read_labels(labels_path)
        assert len(stored.records) == 4

    def test_recovered_instances_not_reserved(self, tmp_path):
        labels_path = tmp_path / "labels.jsonl"
        manifest = make_manifest(3)
        app = create_app(manifest=manifest, labels_path=labels_path)
        client = TestClient(app)
        client.post("/labels", json={"instance_id": "inst_000", "theta_deg": 0, "labeler_id": "x"})
        # Restart: inst_000 is already labeled, only 2 remain.
        app2 = create_app(manifest=manifest, labels_path=labels_path)
        client2 = TestClient(app2)
        sid = new_session(client2)
        served = set()
        while True:
            resp = client2.get("/instances/next", params={"session": sid})
            if resp.status_code == 204:
                break
            served.add(resp.json()["instance_id"])
        assert served == {"inst_001", "inst_002"}


class TestProgress:
    def test_counters(self, app_env):
        client, _, _ = app_env
        sid = new_session(client)
        client.get("/instances/next", params={"session": sid})
        resp = client.get("/progress", params={"session": sid})
        body = resp.json()
        assert body["served"] == 1
        assert body["queued"] == 2
        assert client.get("/healthz").json()["status"] == "ok"
