import io
import json
import os
import socket
import tempfile
import threading
import time
import unittest
from dataclasses import replace

import pytest

from semantly.controllers.main import (
    EXIT_CONFIG, EXIT_IO, EXIT_LOG, EXIT_OK, cmd_render, cmd_replay, cmd_score, cmd_serve, cmd_simulate, main,
    parse_address,
)
from semantly.core.exceptions import ConfigError
from semantly.core.simulator import default_scenario
from semantly.models.scenario import SensorRates, Waypoint


def write_lab_scene(path, seconds=15.0, seed=0):
    """The lab scene cut to its first leg, with sparse scans."""
    sc = default_scenario()
    sc = replace(
        sc,
        trajectory=(sc.trajectory[0], Waypoint(seconds, sc.trajectory[1].pose)),
        rates=SensorRates(pose_hz=30.0, scan_hz=1.0, detection_hz=10.0),
        seed=seed,
    )
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sc.to_dict(), f)
    return path


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        self.scene = write_lab_scene(os.path.join(self.tmp, "scene.json"))
        self.log = os.path.join(self.tmp, "run.jsonl")

    def tearDown(self):
        self._tmp.cleanup()

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)


@pytest.mark.integration
class TestSimulateAndReplay(CliTestCase):

    # -----------------------------
    # ✔ Test simulate -> replay -> score
    # -----------------------------
    def test_round_trip(self):
        self.assertEqual(cmd_simulate(self.scene, None, self.log), EXIT_OK)
        self.assertTrue(os.path.exists(self.path("run.truth.json")))

        self.assertEqual(cmd_replay(self.log, None, self.path("out")), EXIT_OK)
        for name in ("snapshot.json", "events.jsonl", "map.pgm", "map.yaml", "report.json"):
            self.assertTrue(os.path.exists(self.path("out", name)), name)
        with open(self.path("out", "snapshot.json"), encoding="utf-8") as f:
            snapshot = json.load(f)
        self.assertEqual(snapshot["format_version"], 1)
        self.assertEqual(sorted(o["class"] for o in snapshot["objects"]), ["chair", "chair", "person", "person"])
        with open(self.path("out", "report.json"), encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(report["objects"], 4)
        self.assertIn("wall_clock_s", report)

        stdout = io.StringIO()
        code = cmd_score(self.path("out", "snapshot.json"), self.path("run.truth.json"), 0.5, stdout=stdout)
        self.assertEqual(code, EXIT_OK)
        metrics = json.loads(stdout.getvalue())
        self.assertEqual((metrics["true_positives"], metrics["duplicates"], metrics["false_objects"]), (4, 0, 0))
        self.assertEqual(stdout.getvalue().count("\n"), 1)

    def test_replay_is_byte_identical(self):
        cmd_simulate(self.scene, None, self.log)
        self.assertEqual(cmd_replay(self.log, None, self.path("a")), EXIT_OK)
        self.assertEqual(cmd_replay(self.log, None, self.path("b")), EXIT_OK)
        for name in ("snapshot.json", "events.jsonl", "map.pgm", "map.yaml"):
            self.assertEqual(read_bytes(self.path("a", name)), read_bytes(self.path("b", name)), name)

    def test_seed_override(self):
        self.assertEqual(cmd_simulate(self.scene, 7, self.log), EXIT_OK)
        other = self.path("other.jsonl")
        self.assertEqual(cmd_simulate(self.scene, 8, other), EXIT_OK)
        self.assertNotEqual(read_bytes(self.log), read_bytes(other))
        with open(self.path("run.truth.json"), encoding="utf-8") as a, \
                open(self.path("other.truth.json"), encoding="utf-8") as b:
            self.assertEqual(json.load(a)["objects"], json.load(b)["objects"])

    def test_render(self):
        cmd_simulate(self.scene, None, self.log)
        cmd_replay(self.log, None, self.path("out"))
        out = self.path("map.png")
        self.assertEqual(cmd_render(self.path("out", "map"), self.path("out", "snapshot.json"), out), EXIT_OK)
        self.assertTrue(read_bytes(out).startswith(b"\x89PNG"))

    def test_main_dispatch(self):
        self.assertEqual(main(["simulate", "--scenario", self.scene, "--out", self.log, "--seed", "3"]), EXIT_OK)
        self.assertEqual(main(["replay", self.log, "--out", self.path("out")]), EXIT_OK)
        self.assertEqual(main(["score", self.path("out", "snapshot.json"), self.path("run.truth.json")]), EXIT_OK)


@pytest.mark.unit
class TestExitCodes(CliTestCase):

    # -----------------------------
    # ✔ Test documented nonzero exit codes
    # -----------------------------
    def test_missing_log(self):
        missing = self.path("nope.jsonl")
        with self.assertLogs("semantly.controllers.main", level="ERROR") as logs:
            self.assertEqual(cmd_replay(missing, None, self.path("out")), EXIT_LOG)
        self.assertIn(missing, "\n".join(logs.output))

    def test_malformed_config(self):
        config = self.path("config.json")
        with open(config, "w", encoding="utf-8") as f:
            f.write('{"layer": {"reuse_radius": -1}}')
        with open(self.log, "w", encoding="utf-8") as f:
            f.write('{"t": 0.0, "type": "pose", "p": [0, 0, 0], "q": [1, 0, 0, 0]}\n')
        self.assertEqual(cmd_replay(self.log, config, self.path("out")), EXIT_CONFIG)

    def test_malformed_log(self):
        with open(self.log, "w", encoding="utf-8") as f:
            f.write('{"t": 0.0, "type": "pose", "p": [0, 0, 0], "q": [1, 0, 0, 0]}\n{"t": 1.0, "type": "what"}\n')
        self.assertEqual(cmd_replay(self.log, None, self.path("out")), EXIT_LOG)

    def test_undecodable_log(self):
        with open(self.log, "wb") as f:
            f.write(b'{"t": 0.0, "type": "pose", "p": [0, 0, 0], "q": [1, 0, 0, 0]}\n\xff\xfe\n')
        self.assertEqual(cmd_replay(self.log, None, self.path("out")), EXIT_LOG)

    def test_unwritable_output(self):
        with open(self.log, "w", encoding="utf-8") as f:
            f.write('{"t": 0.0, "type": "pose", "p": [0, 0, 0], "q": [1, 0, 0, 0]}\n')
        blocker = self.path("file")
        with open(blocker, "w", encoding="utf-8") as f:
            f.write("x")
        self.assertEqual(cmd_replay(self.log, None, os.path.join(blocker, "out")), EXIT_IO)

    def test_invalid_scenario(self):
        with open(self.scene, encoding="utf-8") as f:
            document = json.load(f)
        document["rates"]["pose_hz"] = 0
        with open(self.scene, "w", encoding="utf-8") as f:
            json.dump(document, f)
        self.assertEqual(cmd_simulate(self.scene, None, self.log), EXIT_CONFIG)
        self.assertFalse(os.path.exists(self.log))

    def test_non_integer_seed(self):
        with open(self.scene, encoding="utf-8") as f:
            document = json.load(f)
        document["seed"] = "abc"
        with open(self.scene, "w", encoding="utf-8") as f:
            json.dump(document, f)
        self.assertEqual(cmd_simulate(self.scene, None, self.log), EXIT_CONFIG)

    def test_score_unreadable(self):
        self.assertEqual(cmd_score(self.path("a.json"), self.path("b.json"), stdout=io.StringIO()), EXIT_LOG)
        with open(self.path("a.json"), "w", encoding="utf-8") as f:
            f.write('{"objects": []}')
        self.assertEqual(cmd_score(self.path("a.json"), self.path("a.json"), stdout=io.StringIO()), EXIT_LOG)

    def test_render_missing_map(self):
        self.assertEqual(cmd_render(self.path("nope"), None, self.path("x.png")), EXIT_IO)

    def test_serve_errors(self):
        self.assertEqual(cmd_serve(snapshot_path=self.path("nope.json"), address="127.0.0.1:0"), EXIT_LOG)
        self.assertEqual(cmd_serve(log_path=self.log, address="localhost"), EXIT_CONFIG)

    def test_serve_bind_failure(self):
        with open(self.path("snap.json"), "w", encoding="utf-8") as f:
            json.dump({"format_version": 1, "t": 0.0, "objects": []}, f)
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as taken:
            taken.bind(("127.0.0.1", 0))
            taken.listen(1)
            port = taken.getsockname()[1]
            code = cmd_serve(snapshot_path=self.path("snap.json"), address=f"127.0.0.1:{port}")
        self.assertEqual(code, EXIT_IO)

    def test_parse_address(self):
        self.assertEqual(parse_address("0.0.0.0:9000"), ("0.0.0.0", 9000))
        self.assertEqual(parse_address(":9000"), ("127.0.0.1", 9000))
        with self.assertRaises(ConfigError):
            parse_address("host:port")


@pytest.mark.integration
class TestServe(CliTestCase):

    def serve_and_ask(self, query, expected, **kwargs):
        answers = []

        def client(server):
            deadline = time.monotonic() + 30.0
            try:
                with socket.create_connection(server.address, timeout=10) as conn, conn.makefile("rb") as reader:
                    while time.monotonic() < deadline:
                        conn.sendall((query + "\n").encode("utf-8"))
                        answers.append(reader.readline().decode("utf-8"))
                        if answers[-1] == expected:
                            break
                        time.sleep(0.05)
            finally:
                server.stop()

        def ready(server):
            threading.Thread(target=client, args=(server,), daemon=True).start()

        code = cmd_serve(address="127.0.0.1:0", server_ready=ready, **kwargs)
        return code, answers

    # -----------------------------
    # ✔ Test serving a snapshot file and a live replay
    # -----------------------------
    def test_serve_snapshot_file(self):
        with open(self.path("snap.json"), "w", encoding="utf-8") as f:
            json.dump({"format_version": 1, "t": 2.0, "objects": [
                {"id": 1, "class": "chair", "x": 1.0, "y": 0.0, "yaw": 0.0, "hits": 12, "mean_score": 0.8},
            ]}, f)
        code, answers = self.serve_and_ask("COUNT chair", "1\n", snapshot_path=self.path("snap.json"))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(answers[-1], "1\n")

    def test_serve_live_replay(self):
        self.assertEqual(cmd_simulate(self.scene, None, self.log), EXIT_OK)
        code, answers = self.serve_and_ask("COUNT chair", "2\n", log_path=self.log)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(answers[-1], "2\n")
