"""Command-line entry points: replay, simulate, score, serve, render.

Exit codes: 0 success, 2 configuration or scenario, 3 log or input, 4 I/O or bind.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional

from semantly.controllers.query_server import SnapshotHolder, serve_queries
from semantly.controllers.render import render_map
from semantly.core.exceptions import ConfigError, ExportError, LogError, SemantlyError
from semantly.core.ingestion import load_run_config, replay
from semantly.core.map_io import export_map, load_map
from semantly.core.scoring import DEFAULT_MATCH_RADIUS, score_run
from semantly.core.simulator import (
    default_scenario, load_scenario, synthesize_log, truth_path_for, write_log, write_truth,
)
from semantly.core.sinks import EventLogSink, MemorySink, PublishingSink, SinkGroup
from semantly.core.utils import to_json_line, write_json
from semantly.models.scenario import GroundTruth
from semantly.models.track import ObjectMapSnapshot

from logging import getLogger
logger = getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LOG = 3
EXIT_IO = 4

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

SNAPSHOT_FILENAME = "snapshot.json"
EVENTS_FILENAME = "events.jsonl"
MAP_PREFIX = "map"
REPORT_FILENAME = "report.json"


def _exit_code(error: Exception) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, LogError):
        return EXIT_LOG
    return EXIT_IO


def _read_json(path, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise LogError(f"cannot read {what} {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise LogError(f"{what} {path} is not valid JSON: {e.msg}") from e


def read_snapshot(path) -> ObjectMapSnapshot:
    try:
        return ObjectMapSnapshot.from_dict(_read_json(path, "snapshot"))
    except (KeyError, TypeError, ValueError) as e:
        raise LogError(f"snapshot {path} is invalid: {e}") from e


def read_truth(path) -> GroundTruth:
    try:
        return GroundTruth.from_dict(_read_json(path, "ground truth"))
    except (KeyError, TypeError, ValueError) as e:
        raise LogError(f"ground truth {path} is invalid: {e}") from e


def cmd_replay(log_path, config_path=None, out_dir=".") -> int:
    try:
        cfg = load_run_config(config_path)
        if not os.path.exists(log_path):
            raise LogError(f"log not found: {log_path}")
        os.makedirs(out_dir, exist_ok=True)
        memory = MemorySink()
        with open(os.path.join(out_dir, EVENTS_FILENAME), "w", encoding="utf-8", newline="\n") as events:
            report = replay(log_path, cfg, SinkGroup([memory, EventLogSink(events)]))
        write_json(os.path.join(out_dir, SNAPSHOT_FILENAME), report.snapshot.to_dict())
        export_map(report.grid, os.path.join(out_dir, MAP_PREFIX))
        write_json(os.path.join(out_dir, REPORT_FILENAME), report.to_dict())
    except (SemantlyError, OSError) as e:
        logger.error(f"Error in replay: {e}")
        return _exit_code(e)
    logger.info(f"Replay results written to {out_dir}: {report.objects} objects {report.per_class}")
    return EXIT_OK


def cmd_simulate(scenario_path=None, seed: Optional[int] = None, out_path="run.jsonl", config_path=None) -> int:
    try:
        cfg = load_run_config(config_path)
        scenario = default_scenario() if scenario_path is None else load_scenario(scenario_path)
        if seed is not None:
            scenario = scenario.with_seed(seed)
        records, truth = synthesize_log(scenario, cfg)
        write_log(records, out_path)
        write_truth(truth, truth_path_for(out_path))
    except (SemantlyError, OSError) as e:
        logger.error(f"Error in simulate: {e}")
        return _exit_code(e)
    logger.info(f"Wrote {len(records)} records to {out_path}")
    return EXIT_OK


def cmd_score(snapshot_path, truth_path, match_radius: float = DEFAULT_MATCH_RADIUS, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        metrics = score_run(read_snapshot(snapshot_path), read_truth(truth_path), match_radius)
    except LogError as e:
        logger.error(f"Error in score: {e}")
        return EXIT_LOG
    stdout.write(to_json_line(metrics.to_dict()) + "\n")
    return EXIT_OK


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    try:
        return (host or "127.0.0.1", int(port))
    except ValueError:
        raise ConfigError(f"invalid address {address!r}, expected HOST:PORT")


def cmd_serve(snapshot_path=None, log_path=None, config_path=None, address="127.0.0.1:7070",
              server_ready=None) -> int:
    """Serve a snapshot file, or the live snapshots of a replay, until interrupted."""
    try:
        host, port = parse_address(address)
        cfg = load_run_config(config_path) if log_path else None
        holder = SnapshotHolder(read_snapshot(snapshot_path) if snapshot_path else None)
        feed = (lambda: replay(log_path, cfg, PublishingSink(holder.publish))) if log_path else None
        serve_queries(holder, host, port, feed, server_ready)
    except (SemantlyError, OSError) as e:
        logger.error(f"Error in serve: {e}")
        return _exit_code(e)
    return EXIT_OK


def cmd_render(map_path, snapshot_path=None, out_path="map.png") -> int:
    try:
        grid = load_map(map_path)
        snapshot = read_snapshot(snapshot_path) if snapshot_path else None
        render_map(grid, snapshot, out_path)
    except (ExportError, OSError) as e:
        logger.error(f"Error in render: {e}")
        return EXIT_IO
    except LogError as e:
        logger.error(f"Error in render: {e}")
        return EXIT_LOG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semantly", description="Object-level semantic mapping from run logs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("replay", help="replay a run log into a map and an object layer")
    p.add_argument("log", help="run log (JSON lines)")
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--out", default="out", help="output directory")

    p = commands.add_parser("simulate", help="synthesize a run log with ground truth")
    p.add_argument("--scenario", help="scenario file; the lab scene by default")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--config", help="run configuration (JSON) for camera and extrinsics")
    p.add_argument("--out", default="run.jsonl", help="output log path; truth goes next to it")

    p = commands.add_parser("score", help="score a snapshot against ground truth")
    p.add_argument("snapshot")
    p.add_argument("truth")
    p.add_argument("--match-radius", type=float, default=DEFAULT_MATCH_RADIUS)

    p = commands.add_parser("serve", help="answer LIST / NEAREST / COUNT queries over TCP")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--snapshot", help="serve a snapshot file")
    source.add_argument("--log", help="replay a log and serve its snapshots as they are published")
    p.add_argument("--config", help="run configuration for --log")
    p.add_argument("--addr", default="127.0.0.1:7070", help="HOST:PORT")

    p = commands.add_parser("render", help="draw an exported map and its objects to a PNG")
    p.add_argument("map", help="map metadata file or path prefix")
    p.add_argument("--snapshot")
    p.add_argument("--out", default="map.png")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT, stream=sys.stderr)

    if args.command == "replay":
        return cmd_replay(args.log, args.config, args.out)
    if args.command == "simulate":
        return cmd_simulate(args.scenario, args.seed, args.out, args.config)
    if args.command == "score":
        return cmd_score(args.snapshot, args.truth, args.match_radius)
    if args.command == "serve":
        return cmd_serve(args.snapshot, args.log, args.config, args.addr)
    return cmd_render(args.map, args.snapshot, args.out)


if __name__ == "__main__":
    sys.exit(main())
