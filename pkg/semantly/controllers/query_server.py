"""Line protocol over TCP for planners reading the object layer.

Requests, one per line:
    LIST
    NEAREST <class> <x> <y>
    COUNT <class>
Each request gets exactly one JSON line back. Failures come back as
{"error": "..."} and the connection stays open.
"""
from __future__ import annotations

import math
import socket
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from semantly.core.exceptions import QueryError
from semantly.core.utils import to_json_line
from semantly.models.track import ObjectMapSnapshot

from logging import getLogger
logger = getLogger(__name__)

UNKNOWN_VERB = "unknown verb"
BAD_ARGUMENTS = "bad arguments"
ARITY = {"LIST": 0, "NEAREST": 3, "COUNT": 1}


@dataclass(frozen=True)
class QueryRequest:
    verb: str
    class_label: Optional[str] = None
    x: Optional[float] = None
    y: Optional[float] = None


def parse_query(line: str) -> QueryRequest:
    tokens = line.split()
    if not tokens or tokens[0] not in ARITY:
        raise QueryError(UNKNOWN_VERB)
    verb, args = tokens[0], tokens[1:]
    if len(args) != ARITY[verb]:
        raise QueryError(BAD_ARGUMENTS)
    if verb == "LIST":
        return QueryRequest(verb)
    if verb == "COUNT":
        return QueryRequest(verb, args[0])
    try:
        x, y = float(args[1]), float(args[2])
    except ValueError:
        raise QueryError(BAD_ARGUMENTS)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise QueryError(BAD_ARGUMENTS)
    return QueryRequest(verb, args[0], x, y)


def answer_query(request: QueryRequest, snapshot: ObjectMapSnapshot):
    if request.verb == "LIST":
        return [obj.to_dict() for obj in snapshot.objects]
    if request.verb == "COUNT":
        return snapshot.count(request.class_label)
    nearest = snapshot.nearest(request.class_label, request.x, request.y)
    return None if nearest is None else nearest.to_dict()


def respond(line: str, snapshot: ObjectMapSnapshot) -> str:
    """Response line (without the newline) for one request line."""
    try:
        return to_json_line(answer_query(parse_query(line), snapshot))
    except QueryError as e:
        logger.warning(f"Rejected query {line.strip()!r}: {e}")
        return to_json_line({"error": str(e)})


class SnapshotHolder:
    """Latest published snapshot; replacing it is atomic for readers."""

    def __init__(self, snapshot: Optional[ObjectMapSnapshot] = None):
        self._lock = threading.Lock()
        self._snapshot = snapshot or ObjectMapSnapshot(0.0)
        self.published = 0

    def publish(self, snapshot: ObjectMapSnapshot) -> None:
        with self._lock:
            self._snapshot = snapshot
            self.published += 1

    def current(self) -> ObjectMapSnapshot:
        with self._lock:
            return self._snapshot


class QueryServer:
    """Thread per connection; every request reads the holder's current snapshot."""

    def __init__(self, holder: SnapshotHolder, host: str = "127.0.0.1", port: int = 7070):
        self.holder = holder
        self.host = host
        self.port = port
        self.server_socket: Optional[socket.socket] = None
        self.running = False
        self._clients = 0
        self._clients_lock = threading.Lock()

    @property
    def active_connections(self) -> int:
        with self._clients_lock:
            return self._clients

    @property
    def address(self) -> tuple[str, int]:
        return self.server_socket.getsockname()[:2]

    def bind(self) -> None:
        """Raises OSError if the endpoint cannot be bound."""
        self.server_socket = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.server_socket.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self.server_socket.bind((self.host, self.port))
            self.server_socket.listen(128)
        except OSError:
            self.server_socket.close()
            raise
        self.running = True
        logger.info(f"Query server listening on {self.address[0]}:{self.address[1]}")

    def serve_forever(self) -> None:
        if self.server_socket is None:
            self.bind()
        try:
            while self.running:
                try:
                    client_socket, address = self.server_socket.accept()
                except OSError:
                    break
                logger.debug(f"Query connection from {address}")
                with self._clients_lock:
                    self._clients += 1
                threading.Thread(target=self.handle_client, args=(client_socket, address), daemon=True).start()
        finally:
            self.stop()

    def start(self) -> threading.Thread:
        """Bind if needed and serve from a background thread."""
        if self.server_socket is None:
            self.bind()
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def stop(self) -> None:
        if not self.running:
            return
        self.running = False
        if self.server_socket:
            try:
                self.server_socket.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.server_socket.close()
        logger.info("Query server stopped")

    def handle_client(self, client_socket: socket.socket, address: tuple) -> None:
        try:
            with client_socket, client_socket.makefile("rb") as reader:
                for raw in reader:
                    line = raw.decode("utf-8", errors="replace")
                    if not line.strip():
                        continue
                    response = respond(line, self.holder.current())
                    client_socket.sendall((response + "\n").encode("utf-8"))
        except OSError as e:
            logger.warning(f"Error with query client {address}: {e}")
        finally:
            with self._clients_lock:
                self._clients -= 1
            logger.debug(f"Query connection closed for {address}")


def serve_queries(
    holder: SnapshotHolder,
    host: str = "127.0.0.1",
    port: int = 7070,
    feed: Optional[Callable[[], object]] = None,
    server_ready: Optional[Callable[[QueryServer], None]] = None,
) -> None:
    """Bind, run `feed` while serving, then serve until interrupted or stopped.

    Bind failures raise OSError; errors raised by `feed` propagate once the
    server is stopped.
    """
    server = QueryServer(holder, host, port)
    server.bind()
    if server_ready is not None:
        server_ready(server)
    thread = server.start()
    try:
        if feed is not None:
            feed()
        thread.join()
    except KeyboardInterrupt:
        logger.info("Interrupted")
    finally:
        server.stop()
