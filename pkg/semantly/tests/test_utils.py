import json
import math
import os
import tempfile
import unittest

import pytest

from semantly.core.utils import (
    distance, load_json_resource, logit, probability, to_json_line, wrap_angle, write_json,
)


@pytest.mark.unit
class TestAngles(unittest.TestCase):

    # -----------------------------
    # ✔ Test wrapping into (-pi, pi]
    # -----------------------------
    def test_wrap_angle(self):
        self.assertAlmostEqual(wrap_angle(3 * math.pi / 2), -math.pi / 2)
        self.assertAlmostEqual(wrap_angle(-3 * math.pi / 2), math.pi / 2)
        self.assertEqual(wrap_angle(math.pi), math.pi)
        self.assertEqual(wrap_angle(-math.pi), math.pi)
        self.assertEqual(wrap_angle(0.25), 0.25)

    def test_distance(self):
        self.assertEqual(distance((0.0, 0.0), (3.0, 4.0)), 5.0)


@pytest.mark.unit
class TestLogOdds(unittest.TestCase):

    def test_logit_and_back(self):
        self.assertEqual(logit(0.5), 0.0)
        self.assertAlmostEqual(probability(logit(0.7)), 0.7)
        self.assertAlmostEqual(logit(0.7), 0.8472978603872037)


@pytest.mark.unit
class TestJson(unittest.TestCase):

    def test_json_line(self):
        self.assertEqual(to_json_line({"t": 1.5, "kind": "dropped"}), '{"t":1.5,"kind":"dropped"}')
        with self.assertRaises(ValueError):
            to_json_line({"x": float("nan")})

    def test_write_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "doc.json")
            write_json(path, {"a": [1, 2]})
            with open(path, encoding="utf-8") as f:
                text = f.read()
        self.assertTrue(text.endswith("}\n"))
        self.assertEqual(json.loads(text), {"a": [1, 2]})

    def test_bundled_resource(self):
        scene = load_json_resource("lab_scenario.json")
        self.assertIn("objects", scene)
