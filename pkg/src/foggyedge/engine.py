"""Discrete-event core: the virtual clock and event queue, plus link models and road mobility.

Time is an integer number of ticks (1 tick = 1 us).  Events are processed in
(time, seq) order, ``seq`` being the insertion counter, so a run is a pure
function of its configuration and seed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Protocol, Union

from .compute import TICKS_PER_SECOND, ticks

__all__ = [
    "AdhocChannel",
    "Engine",
    "Event",
    "EventKind",
    "Kinematics",
    "Link",
    "TimeTravel",
    "WaypointTrack",
    "load_waypoints",
    "time_in_range",
]


class TimeTravel(RuntimeError):
    pass


class EventKind(Enum):
    PacketArrival = "PacketArrival"
    ExecComplete = "ExecComplete"
    TimerExpiry = "TimerExpiry"
    MobilityUpdate = "MobilityUpdate"
    RequestGeneration = "RequestGeneration"


@dataclass(order=True)
class Event:
    time: int
    seq: int
    target: str = field(compare=False)
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class Handler(Protocol):
    def handle(self, event: Event) -> None: ...


class Engine:
    def __init__(self):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.handlers: dict[str, Callable[[Event], None]] = {}
        self.processed = 0

    def register(self, target: str, handler: Callable[[Event], None]) -> None:
        self.handlers[target] = handler

    def schedule(self, time: int, target: str, kind: EventKind, payload: Any = None) -> Event:
        if time < self.now:
            raise TimeTravel(f"event at {time} scheduled while clock is at {self.now}")
        ev = Event(time, self._seq, target, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def after(self, delay: int, target: str, kind: EventKind, payload: Any = None) -> Event:
        return self.schedule(self.now + delay, target, kind, payload)

    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> Optional[Event]:
        if not self._queue:
            return None
        ev = heapq.heappop(self._queue)
        self.now = ev.time
        self.processed += 1
        self.handlers[ev.target](ev)
        return ev

    def run(self, until: Optional[int] = None) -> None:
        """Process events; with ``until`` stop before the first event past it."""
        while self._queue:
            if until is not None and self._queue[0].time > until:
                self.now = until
                return
            self.step()


@dataclass(frozen=True)
class Link:
    kind: str  # "wired" | "adhoc"
    latency: float  # seconds
    bandwidth: int  # bytes/second
    range: Optional[float] = None  # meters, ad-hoc only

    def __post_init__(self):
        if self.kind not in ("wired", "adhoc"):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == "adhoc" and self.range is None:
            raise ValueError("ad-hoc links need a radio range")
        if self.bandwidth <= 0 or self.latency < 0:
            raise ValueError("link needs positive bandwidth and non-negative latency")

    def transmit_ticks(self, size: int) -> int:
        return -(-size * TICKS_PER_SECOND // self.bandwidth)

    def delay_ticks(self, size: int) -> int:
        return ticks(self.latency) + self.transmit_ticks(size)


@dataclass
class Kinematics:
    """Linear motion along the road, anchored at ``t0`` (ticks)."""

    position: float
    speed: float = 0.0
    direction: int = 1
    t0: int = 0

    def at(self, now: int) -> float:
        return self.position + self.direction * self.speed * (now - self.t0) / TICKS_PER_SECOND

    def velocity(self) -> float:
        return self.direction * self.speed


def time_in_range(k: Kinematics, edge_position: float, radius: float, now: int,
                  road_length: Optional[float] = None) -> float:
    """Seconds until the vehicle is exactly ``radius`` from ``edge_position``.

    On a loop road of ``road_length`` the offset is taken the short way round.
    """
    v = k.velocity()
    if v == 0:
        return math.inf
    rel = k.at(now) - edge_position
    if road_length:
        rel = (rel + road_length / 2) % road_length - road_length / 2
    if abs(rel) > radius:
        return 0.0
    boundary = radius if v > 0 else -radius
    return (boundary - rel) / v


class Positioned(Protocol):
    node_id: str

    def position(self, now: int) -> float: ...


class AdhocChannel:
    """A shared radio medium; delivery goes to members within range at send time.

    ``road_length`` makes distances wrap for a loop road.
    """

    def __init__(self, name: str, link: Link, road_length: Optional[float] = None):
        self.name = name
        self.link = link
        self.road_length = road_length
        self.members: dict[str, Positioned] = {}

    def join(self, node: Positioned) -> None:
        self.members[node.node_id] = node

    def leave(self, node_id: str) -> None:
        self.members.pop(node_id, None)

    def distance(self, a: float, b: float) -> float:
        d = abs(a - b)
        if self.road_length:
            d %= self.road_length
            d = min(d, self.road_length - d)
        return d

    def receivers(self, sender: str, now: int) -> list[str]:
        src = self.members[sender].position(now)
        out = []
        for node_id, node in self.members.items():
            if node_id == sender:
                continue
            if self.distance(node.position(now), src) <= self.link.range:
                out.append(node_id)
        return out


@dataclass
class WaypointTrack:
    """Piecewise-linear motion from ``<vehicle> <time_s> <position_m> <speed_mps>`` lines."""

    points: list[tuple[int, float, float]]  # (tick, position, signed speed)

    def kinematics_at(self, now: int) -> Kinematics:
        current = self.points[0]
        for p in self.points:
            if p[0] > now:
                break
            current = p
        t, pos, v = current
        return Kinematics(pos, abs(v), 1 if v >= 0 else -1, t)


def load_waypoints(path: Union[str, Path]) -> dict[str, WaypointTrack]:
    tracks: dict[str, list[tuple[int, float, float]]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected '<vehicle> <time_s> <position_m> <speed_mps>'")
        vid, t, pos, speed = parts
        tracks.setdefault(vid, []).append((ticks(float(t)), float(pos), float(speed)))
    out = {}
    for vid, pts in tracks.items():
        pts.sort(key=lambda p: p[0])
        out[vid] = WaypointTrack(pts)
    return out
