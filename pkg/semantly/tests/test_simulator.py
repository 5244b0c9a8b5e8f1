import json
import math
import os
import tempfile
import time
import unittest
from dataclasses import replace

import numpy as np
import pytest

from semantly.core.exceptions import ConfigError
from semantly.core.geometry import DepthSamples, back_project, compose2, detection_to_map
from semantly.core.ingestion import DETECTIONS, POSE, SCAN, replay
from semantly.core.scoring import score_run
from semantly.core.simulator import (
    cast_ray, cast_rays, default_scenario, line_of_sight, load_scenario, log_lines, ray_segment_distance,
    synthesize_log, trajectory_pose, truth_path_for, write_log, write_truth,
)
from semantly.models.config_settings import RunConfig
from semantly.models.pose import Pose2, Pose3
from semantly.models.scenario import GroundTruth, NoiseModel, Scenario, ScenarioObject, SensorRates, Waypoint


def static_scene(objects, walls=(), duration=1.9, noise=None):
    return Scenario(
        walls=walls,
        objects=tuple(objects),
        trajectory=(Waypoint(0.0, Pose2()), Waypoint(duration, Pose2())),
        noise=noise or NoiseModel.noiseless(),
    )


def short_lab(seconds=6.0):
    sc = default_scenario()
    return replace(sc, trajectory=(sc.trajectory[0], Waypoint(seconds, trajectory_pose(sc, seconds))))


def frames_of(records):
    return [r.payload for r in records if r.kind == DETECTIONS]


@pytest.mark.unit
class TestWorldGeometry(unittest.TestCase):

    def test_ray_segment_distance(self):
        self.assertAlmostEqual(ray_segment_distance((0, 0), 0.0, (2, -1), (2, 1)), 2.0)
        self.assertIsNone(ray_segment_distance((0, 0), math.pi, (2, -1), (2, 1)))
        self.assertIsNone(ray_segment_distance((0, 0), 0.0, (0, 1), (2, 1)))
        self.assertIsNone(ray_segment_distance((0, 0), 0.0, (2, 0.5), (2, 1)))

    def test_cast_ray_takes_closest_wall(self):
        walls = (((3, -1), (3, 1)), ((2, -1), (2, 1)))
        self.assertAlmostEqual(cast_ray((0, 0), 0.0, walls), 2.0)
        self.assertIsNone(cast_ray((0, 0), math.pi / 2, walls))

    def test_cast_rays_matches_single_rays(self):
        walls = default_scenario().walls + (((3, -1), (3, 1)), ((1, 1), (1, 1.5)))
        angles = np.linspace(-math.pi, math.pi, 73)
        batched = cast_rays((0.4, -0.2), angles, walls)
        for angle, d in zip(angles, batched):
            single = cast_ray((0.4, -0.2), float(angle), walls)
            self.assertAlmostEqual(float(d), single, delta=1e-12)
        self.assertTrue(np.isinf(cast_rays((0, 0), np.array([0.0]), ())).all())

    def test_line_of_sight(self):
        walls = (((1, -0.2), (1, 0.2)),)
        self.assertFalse(line_of_sight((0, 0), (2, 0), walls))
        self.assertTrue(line_of_sight((0, 0), (0.5, 0), walls))
        self.assertTrue(line_of_sight((0, 0), (2, 1), walls))

    # -----------------------------
    # ✔ Test trajectory interpolation and clamping
    # -----------------------------
    def test_trajectory_pose(self):
        sc = default_scenario()
        mid = trajectory_pose(sc, 7.5)
        self.assertAlmostEqual(mid.x, 0.25)
        self.assertAlmostEqual(mid.y, 0.15)
        self.assertAlmostEqual(mid.yaw, 0.125)
        self.assertEqual(trajectory_pose(sc, -1.0), sc.trajectory[0].pose)
        self.assertEqual(trajectory_pose(sc, 99.0), sc.trajectory[-1].pose)

    def test_trajectory_yaw_shortest_arc(self):
        sc = Scenario((), (), (Waypoint(0.0, Pose2(0, 0, 3.0)), Waypoint(1.0, Pose2(0, 0, -3.0))))
        self.assertAlmostEqual(abs(trajectory_pose(sc, 0.5).yaw), math.pi, places=9)


@pytest.mark.unit
class TestScenarioFiles(unittest.TestCase):

    def test_default_scene(self):
        sc = default_scenario()
        self.assertEqual(sorted(o.class_label for o in sc.objects), ["chair", "chair", "person", "person"])
        self.assertEqual((sc.start, sc.end), (0.0, 60.0))
        self.assertEqual(sc.noise.pixel_sigma, 2.0)

    def test_load_errors(self):
        document = default_scenario().to_dict()
        document["rates"]["scan_hz"] = 0
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "scene.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump(document, f)
            with self.assertRaises(ConfigError):
                load_scenario(path)
            with open(path, "w", encoding="utf-8") as f:
                f.write("{")
            with self.assertRaises(ConfigError):
                load_scenario(path)
            with self.assertRaises(ConfigError):
                load_scenario(os.path.join(tmp, "missing.json"))

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            SensorRates(pose_hz=0.0)
        with self.assertRaises(ConfigError):
            NoiseModel(miss_probability=1.5)
        with self.assertRaises(ConfigError):
            Scenario((), (), (Waypoint(1.0, Pose2()), Waypoint(1.0, Pose2())))

    # -----------------------------
    # ✔ Test scalar types are checked at load
    # -----------------------------
    def test_scalar_types(self):
        document = default_scenario().to_dict()
        for key, value in (("seed", "abc"), ("seed", True), ("scan_beams", 1.5), ("camera_max_range", "far")):
            with self.subTest(key=key, value=value):
                with self.assertRaises(ConfigError):
                    Scenario.from_dict({**document, key: value})
        with self.assertRaises(ConfigError):
            Scenario.from_dict({**document, "rates": {"pose_hz": "fast"}})
        loaded = Scenario.from_dict({**document, "seed": 12.0, "scan_beams": 180})
        self.assertEqual((loaded.seed, type(loaded.seed)), (12, int))
        self.assertEqual(loaded.scan_beams, 180)

    def test_truth_sidecar(self):
        self.assertEqual(truth_path_for("out/run.jsonl"), "out/run.truth.json")
        self.assertEqual(truth_path_for("run.log"), "run.log.truth.json")


@pytest.mark.integration
class TestSynthesizeLog(unittest.TestCase):

    # -----------------------------
    # ✔ Test zero-noise static chair
    # -----------------------------
    def test_zero_noise_chair(self):
        sc = static_scene([ScenarioObject("chair", (2.0, 0.0), 0.25)])
        records, truth = synthesize_log(sc)
        frames = frames_of(records)
        self.assertEqual(len(frames), 20)
        self.assertTrue(all([i.to_dict() for i in f.items] == [i.to_dict() for i in frames[0].items] for f in frames))

        report = replay(log_lines(records))
        self.assertEqual(report.objects, 1)
        chair = report.snapshot.objects[0]
        self.assertLess(math.hypot(chair.pose.x - 2.0, chair.pose.y), 1e-6)
        self.assertEqual(score_run(report.snapshot, truth).true_positives, 1)

    def test_occluded_object_never_detected(self):
        sc = static_scene(
            [ScenarioObject("chair", (2.0, 0.0), 0.25), ScenarioObject("person", (3.0, 0.9), 0.3)],
            walls=(((1.0, -0.2), (1.0, 0.2)),),
        )
        frames = frames_of(synthesize_log(sc)[0])
        self.assertEqual(len(frames), 20)
        labels = {item.detection.class_label for frame in frames for item in frame.items}
        self.assertEqual(labels, {"person"})

    def test_out_of_range_object(self):
        sc = static_scene([ScenarioObject("chair", (9.0, 0.0), 0.25)])
        self.assertEqual(frames_of(synthesize_log(sc)[0]), [])

    def test_streams_and_rates(self):
        records, _ = synthesize_log(short_lab())
        kinds = [r.kind for r in records]
        self.assertEqual(kinds.count(POSE), 181)
        self.assertEqual(kinds.count(SCAN), 61)
        self.assertEqual([r.stamp for r in records], sorted(r.stamp for r in records))

    # -----------------------------
    # ✔ Test byte-identical logs and seed handling
    # -----------------------------
    def test_determinism(self):
        sc = short_lab()
        self.assertEqual(log_lines(synthesize_log(sc)[0]), log_lines(synthesize_log(sc)[0]))

    def test_seed_changes_noise_not_truth(self):
        sc = short_lab()
        records_a, truth_a = synthesize_log(sc.with_seed(1))
        records_b, truth_b = synthesize_log(sc.with_seed(2))
        self.assertEqual(truth_a.to_dict()["objects"], truth_b.to_dict()["objects"])
        self.assertNotEqual(log_lines(records_a), log_lines(records_b))

    def test_false_positives(self):
        noise = replace(NoiseModel.noiseless(), false_positive_rate=2.0)
        sc = replace(static_scene([], noise=noise), false_positive_classes=("plant",))
        frames = frames_of(synthesize_log(sc)[0])
        self.assertGreater(len(frames), 0)
        labels = {item.detection.class_label for frame in frames for item in frame.items}
        self.assertEqual(labels, {"plant"})

    def test_depth_dropout_is_reported(self):
        noise = replace(NoiseModel.noiseless(), depth_dropout=1.0)
        records, _ = synthesize_log(static_scene([ScenarioObject("chair", (2.0, 0.0), 0.25)], noise=noise))
        report = replay(records)
        self.assertEqual(report.objects, 0)
        self.assertEqual(report.drops["no_depth"], 20)

    # -----------------------------
    # ✔ Test rendering inverts exactly through back-projection
    # -----------------------------
    def test_forward_backward_consistency(self):
        sc = replace(short_lab(20.0), noise=NoiseModel.noiseless())
        cfg = RunConfig()
        checked = 0
        for frame in frames_of(synthesize_log(sc, cfg)[0]):
            body = trajectory_pose(sc, frame.stamp)
            robot = Pose3.from_xy_yaw(body.x, body.y, body.yaw)
            for item in frame.items:
                point = back_project(item.detection.bbox, DepthSamples.from_millimeters(item.depth_samples_mm),
                                     cfg.intrinsics)
                mapped = detection_to_map(item.detection, point, cfg.T_body_cam, robot, frame.stamp)
                error = min(math.hypot(mapped.x - o.position[0], mapped.y - o.position[1])
                            for o in sc.objects if o.class_label == item.detection.class_label)
                self.assertLess(error, 1e-6)
                checked += 1
        self.assertGreater(checked, 100)

    # -----------------------------
    # ✔ Test ranges against closed-form box intersection
    # -----------------------------
    def test_scan_ranges_match_room_walls(self):
        sc = short_lab(3.0)
        cfg = RunConfig()
        scans = [r.payload for r in synthesize_log(sc, cfg)[0] if r.kind == SCAN]
        for scan in scans:
            sensor = compose2(trajectory_pose(sc, scan.stamp), cfg.T_body_lidar)
            for i, measured in enumerate(scan.ranges):
                angle = sensor.yaw + scan.beam_angle(i)
                dx, dy = math.cos(angle), math.sin(angle)
                exits = []
                if dx:
                    exits.append(((6.0 if dx > 0 else -2.0) - sensor.x) / dx)
                if dy:
                    exits.append(((3.0 if dy > 0 else -3.0) - sensor.y) / dy)
                self.assertAlmostEqual(measured, min(exits), delta=1e-9)

    def test_write_log_and_truth(self):
        records, truth = synthesize_log(static_scene([ScenarioObject("chair", (2.0, 0.0), 0.25)]))
        with tempfile.TemporaryDirectory() as tmp:
            log_path = os.path.join(tmp, "run.jsonl")
            write_log(records, log_path)
            write_truth(truth, truth_path_for(log_path))
            self.assertEqual(replay(log_path).objects, 1)
            with open(os.path.join(tmp, "run.truth.json"), encoding="utf-8") as f:
                loaded = GroundTruth.from_dict(json.load(f))
        self.assertEqual(loaded.objects[0].position, (2.0, 0.0))


@pytest.mark.slow
class TestLabSceneAcceptance(unittest.TestCase):

    # -----------------------------
    # ✔ Test object layer ignores scans
    # -----------------------------
    def test_scans_do_not_change_objects(self):
        records, _ = synthesize_log(short_lab(20.0))
        with_scans = replay(records).snapshot
        without_scans = replay([r for r in records if r.kind != SCAN]).snapshot
        self.assertEqual(with_scans, without_scans)

    # -----------------------------
    # ✔ Test two chairs and two people over 100 seeds in under 30 s
    # -----------------------------
    def test_hundred_seeds(self):
        sc = default_scenario()
        started = time.perf_counter()
        passing = 0
        for seed in range(100):
            records, truth = synthesize_log(sc.with_seed(seed))
            objects = [r for r in records if r.kind != SCAN]
            metrics = score_run(replay(objects).snapshot, truth)
            if (metrics.true_positives, metrics.duplicates, metrics.false_objects) == (4, 0, 0) \
                    and metrics.mean_position_error <= 0.15:
                passing += 1
        elapsed = time.perf_counter() - started
        self.assertGreaterEqual(passing, 95)
        self.assertLess(elapsed, 30.0)
