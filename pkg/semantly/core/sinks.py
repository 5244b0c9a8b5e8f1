"""Consumers of replay output: snapshots after every detection frame, events as they occur."""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Protocol, TextIO

from semantly.core.utils import to_json_line
from semantly.models.track import AssociationEvent, ObjectMapSnapshot


class ReplaySink(Protocol):

    def on_snapshot(self, snapshot: ObjectMapSnapshot) -> None:
        ...

    def on_events(self, events: list[AssociationEvent]) -> None:
        ...


class MemorySink:
    """Keeps every event and the latest snapshot."""

    def __init__(self, keep_snapshots: bool = False):
        self.events: list[AssociationEvent] = []
        self.snapshots: list[ObjectMapSnapshot] = []
        self.latest: Optional[ObjectMapSnapshot] = None
        self.keep_snapshots = keep_snapshots

    def on_snapshot(self, snapshot: ObjectMapSnapshot) -> None:
        self.latest = snapshot
        if self.keep_snapshots:
            self.snapshots.append(snapshot)

    def on_events(self, events: list[AssociationEvent]) -> None:
        self.events.extend(events)


class EventLogSink:
    """One JSON line per event."""

    def __init__(self, stream: TextIO):
        self.stream = stream

    def on_snapshot(self, snapshot: ObjectMapSnapshot) -> None:
        pass

    def on_events(self, events: list[AssociationEvent]) -> None:
        for event in events:
            self.stream.write(to_json_line(event.to_dict()) + "\n")


class PublishingSink:
    """Hands every snapshot to a publisher, e.g. the query server's holder."""

    def __init__(self, publish: Callable[[ObjectMapSnapshot], None]):
        self.publish = publish

    def on_snapshot(self, snapshot: ObjectMapSnapshot) -> None:
        self.publish(snapshot)

    def on_events(self, events: list[AssociationEvent]) -> None:
        pass


class SinkGroup:

    def __init__(self, sinks: Iterable[ReplaySink] = ()):
        self.sinks = list(sinks)

    def on_snapshot(self, snapshot: ObjectMapSnapshot) -> None:
        for sink in self.sinks:
            sink.on_snapshot(snapshot)

    def on_events(self, events: list[AssociationEvent]) -> None:
        if not events:
            return
        for sink in self.sinks:
            sink.on_events(events)
