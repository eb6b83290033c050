"""Per-request bookkeeping collected during a run."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .compute import Instance, MicroserviceSpec
from .naming import FeName, serialize_name

__all__ = ["Metrics", "RequestRecord"]


@dataclass
class RequestRecord:
    name: str
    created_at: int
    consumer: str = ""
    service: str = ""
    satisfied_at: Optional[int] = None
    case: Optional[int] = None
    tier: str = ""  # edge | fog | cloud, where the result was computed
    node: str = ""
    drop_reason: Optional[str] = None

    @property
    def csd(self) -> Optional[int]:
        return None if self.satisfied_at is None else self.satisfied_at - self.created_at

    @property
    def done(self) -> bool:
        return self.satisfied_at is not None or self.drop_reason is not None


class Metrics:
    def __init__(self):
        self.records: dict[str, RequestRecord] = {}
        self.order: list[str] = []
        self.counters: Counter[str] = Counter()
        self.finished_instances: list[Instance] = []
        self.deliveries: Counter[str] = Counter()

    def generated(self, name: FeName, consumer: str, now: int) -> RequestRecord:
        key = serialize_name(name)
        rec = RequestRecord(key, now, consumer, name.microservice)
        self.records[key] = rec
        self.order.append(key)
        return rec

    def get(self, name) -> Optional[RequestRecord]:
        return self.records.get(name if isinstance(name, str) else serialize_name(name))

    def satisfied(self, name: FeName, now: int) -> None:
        rec = self.get(name)
        self.deliveries[serialize_name(name)] += 1
        if rec is not None and not rec.done:
            rec.satisfied_at = now

    def drop(self, name: FeName, reason: str) -> None:
        self.counters[f"drop_{reason}"] += 1
        rec = self.get(name)
        if rec is not None and not rec.done:
            rec.drop_reason = reason

    def allow(self, name: FeName) -> None:
        self.counters["access_granted"] += 1

    def executed(self, name: FeName, case: Optional[int], node: str, spec: MicroserviceSpec,
                 tier: str = "") -> None:
        self.counters["executions"] += 1
        rec = self.get(name)
        if rec is None:
            return
        rec.case = case
        rec.node = node
        rec.tier = tier or {1: "edge", 2: "edge", 3: "fog", 4: "cloud"}.get(case, "cloud")

    def instance_finished(self, inst: Instance) -> None:
        if len(inst.work_log) > 1:
            self.finished_instances.append(inst)

    def list(self) -> list[RequestRecord]:
        return [self.records[k] for k in self.order]
