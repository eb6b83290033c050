"""Microservice catalog and per-node resource accounting.

Resource units gate admission only; an admitted instance always runs at the
host's full speed.  Work is tracked in integer ticks of reference-speed
execution so that handovers conserve it exactly.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .naming import FeName

TICKS_PER_SECOND = 1_000_000

__all__ = [
    "DEFAULT_CATALOG",
    "DoubleRelease",
    "Executor",
    "Instance",
    "MicroserviceSpec",
    "NodeResources",
    "admit",
    "exec_duration",
    "exec_ticks",
    "release",
    "snapshot_instance",
    "seconds",
    "ticks",
]


def ticks(seconds: float) -> int:
    return int(round(seconds * TICKS_PER_SECOND))


def seconds(t: int) -> float:
    return t / TICKS_PER_SECOND


class DoubleRelease(RuntimeError):
    pass


@dataclass(frozen=True)
class MicroserviceSpec:
    name: FeName
    demand: int
    base_duration: float
    code_size: int
    protected: bool = False
    freshness: float = 1.0

    def __post_init__(self):
        if self.demand <= 0:
            raise ValueError("demand must be positive")
        if self.base_duration <= 0:
            raise ValueError("base_duration must be positive")
        if self.name.params:
            raise ValueError("catalog names carry no parameters")

    @property
    def service(self) -> str:
        return self.name.microservice

    @property
    def base_ticks(self) -> int:
        return ticks(self.base_duration)


def _catalog() -> tuple[MicroserviceSpec, ...]:
    region = ("Korea", "Seoul", "Itaewon")
    rows = [
        ("traffic_status", 50, 0.05, 20, False),
        ("parking_finder", 100, 0.1, 50, False),
        ("hd_map_update", 200, 0.2, 100, True),
        ("object_detection", 350, 0.4, 200, False),
        ("ar_navigation", 500, 0.8, 400, True),
    ]
    return tuple(
        MicroserviceSpec(FeName(*region, svc), demand, dur, kb * 1000, protected)
        for svc, demand, dur, kb, protected in rows
    )


DEFAULT_CATALOG = _catalog()


@dataclass
class NodeResources:
    initial: int
    available: int = -1
    speed_factor: float = 1.0
    held: Counter = field(default_factory=Counter, repr=False)

    def __post_init__(self):
        if self.available < 0:
            self.available = self.initial
        if self.speed_factor <= 0:
            raise ValueError("speed_factor must be positive")
        if not 0 <= self.available <= self.initial:
            raise ValueError("available must lie in [0, initial]")

    @property
    def capacity_pct(self) -> float:
        return self.available / self.initial if self.initial else 0.0

    def in_use(self) -> int:
        return self.initial - self.available


def admit(r: NodeResources, s: MicroserviceSpec) -> bool:
    if r.available < s.demand:
        return False
    r.available -= s.demand
    r.held[s.service] += 1
    return True


def release(r: NodeResources, s: MicroserviceSpec) -> NodeResources:
    if r.held[s.service] <= 0 or r.available + s.demand > r.initial:
        raise DoubleRelease(f"release of {s.service} without a matching admit")
    r.held[s.service] -= 1
    if not r.held[s.service]:
        del r.held[s.service]
    r.available += s.demand
    return r


def exec_duration(s: MicroserviceSpec, r: NodeResources) -> float:
    return s.base_duration / r.speed_factor


def exec_ticks(work: int, speed_factor: float) -> int:
    """Ticks needed to deliver ``work`` reference ticks at ``speed_factor``."""
    return math.ceil(work / speed_factor) if work > 0 else 0


@dataclass
class Instance:
    id: str
    spec: MicroserviceSpec
    request_name: FeName
    started_at: int
    remaining_work: int  # reference-speed ticks still owed
    host: str
    resumed_at: int = -1
    speed_factor: float = 1.0
    work_log: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.resumed_at < 0:
            self.resumed_at = self.started_at
        if self.remaining_work > self.spec.base_ticks:
            raise ValueError("remaining_work cannot exceed the base duration")

    def completes_at(self) -> int:
        return self.resumed_at + exec_ticks(self.remaining_work, self.speed_factor)

    def delivered_work(self) -> int:
        return sum(w for _, w in self.work_log)


def snapshot_instance(inst: Instance, now: int) -> Instance:
    """Freeze the instance at ``now``; the copy owes only the unfinished work."""
    done = min(inst.remaining_work, math.floor((now - inst.resumed_at) * inst.speed_factor))
    done = max(done, 0)
    log = inst.work_log + [(inst.host, done)]
    return replace(inst, remaining_work=inst.remaining_work - done, resumed_at=now,
                   work_log=log)


def resume_instance(inst: Instance, host: str, speed_factor: float, now: int) -> Instance:
    return replace(inst, host=host, speed_factor=speed_factor, resumed_at=now)


def finish_instance(inst: Instance) -> Instance:
    """Close the work log at completion."""
    return replace(inst, remaining_work=0, work_log=inst.work_log + [(inst.host, inst.remaining_work)])


@dataclass
class Job:
    spec: MicroserviceSpec
    request_name: FeName
    enqueued_at: int
    context: object = None


class Executor:
    """Runs instances on one node's resources with a bounded FIFO queue.

    ``on_start(instance, job)`` is called whenever an instance begins so the
    owner can schedule its completion.
    """

    def __init__(self, host: str, resources: NodeResources, queue_capacity: int = 64):
        self.host = host
        self.resources = resources
        self.queue_capacity = queue_capacity
        self.queue: deque[Job] = deque()
        self.running: dict[str, tuple[Instance, Job]] = {}
        self.dropped = 0
        self._seq = 0

    def can_start_now(self, spec: MicroserviceSpec) -> bool:
        return not self.queue and self.resources.available >= spec.demand

    def queue_wait_estimate(self) -> int:
        return sum(exec_ticks(j.spec.base_ticks, self.resources.speed_factor) for j in self.queue)

    def submit(self, job: Job, now: int, on_start: Callable[[Instance, Job], None]) -> Optional[str]:
        """Start the job if it fits, else queue it.  Returns "started" or "queued", None on overflow."""
        if not self.queue and admit(self.resources, job.spec):
            on_start(self._launch(job, now), job)
            return "started"
        if job.spec.demand > self.resources.initial or len(self.queue) >= self.queue_capacity:
            self.dropped += 1
            return None
        self.queue.append(job)
        return "queued"

    def _launch(self, job: Job, now: int) -> Instance:
        self._seq += 1
        inst = Instance(
            id=f"{self.host}#{self._seq}",
            spec=job.spec,
            request_name=job.request_name,
            started_at=now,
            remaining_work=job.spec.base_ticks,
            host=self.host,
            speed_factor=self.resources.speed_factor,
        )
        self.running[inst.id] = (inst, job)
        return inst

    def adopt(self, inst: Instance, job: Job, now: int) -> Instance:
        """Host an instance started elsewhere; resources must already be admitted."""
        inst = resume_instance(inst, self.host, self.resources.speed_factor, now)
        self.running[inst.id] = (inst, job)
        return inst

    def complete(self, inst_id: str, now: int,
                 on_start: Callable[[Instance, Job], None]) -> tuple[Instance, Job]:
        inst, job = self.running.pop(inst_id)
        release(self.resources, inst.spec)
        self.drain(now, on_start)
        return finish_instance(inst), job

    def detach(self, inst_id: str, now: int) -> tuple[Instance, Job]:
        """Remove a running instance (handover), returning its snapshot."""
        inst, job = self.running.pop(inst_id)
        release(self.resources, inst.spec)
        return snapshot_instance(inst, now), job

    def drain(self, now: int, on_start: Callable[[Instance, Job], None]) -> None:
        while self.queue and admit(self.resources, self.queue[0].spec):
            job = self.queue.popleft()
            on_start(self._launch(job, now), job)

    def idle(self) -> bool:
        return not self.running and not self.queue and \
            self.resources.available == self.resources.initial
