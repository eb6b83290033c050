"""Vehicular edge and bridge router behavior.

Edges execute consumer requests or offload them with the three extension
flags set.  The bridge steers offloaded Interests to the next edge or to the
fog using its two tracking tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

from .access import (AccessStore, MissingAccessRights, apply_batch, verify)
from .compute import Executor, Job, MicroserviceSpec, exec_ticks, ticks
from .engine import Kinematics, time_in_range
from .forwarder import APP_FACE, Forwarder
from .naming import FeName, serialize_name
from .packet import (HMM_SYNC, ComputedResult, Data, HmmBatch, Interest,
                     MicroserviceCode)

if TYPE_CHECKING:
    from .network import Network

ADHOC_FACE = 1
BRIDGE_FACE = 2

__all__ = [
    "BridgeNode",
    "EdgeDecision",
    "EdgeNode",
    "VecFib",
    "VecFibEntry",
    "VfcFib",
    "VfcFibEntry",
    "bridge_decide",
    "edge_decide",
]


# -- decisions ---------------------------------------------------------------

@dataclass(frozen=True)
class EdgeDecision:
    execute_local: bool
    adhoc_response: bool = False
    microservice_availability: bool = False
    predicted_completion: int = 0  # ticks from now
    time_in_range: float = math.inf  # seconds


def edge_decide(executor: Executor, spec: MicroserviceSpec, has_code: bool,
                kinematics: Kinematics, edge_position: float, radius: float,
                now: int, road_length: Optional[float] = None,
                may_queue: bool = False) -> EdgeDecision:
    """Execute locally only if resources admit it and the consumer stays in range.

    With ``may_queue`` a busy edge may also keep the request in its FIFO queue.
    """
    run = exec_ticks(spec.base_ticks, executor.resources.speed_factor)
    predicted = executor.queue_wait_estimate() + run
    left = time_in_range(kinematics, edge_position, radius, now, road_length)
    stays = predicted <= left * 1_000_000
    fits = executor.can_start_now(spec) or (
        may_queue and len(executor.queue) < executor.queue_capacity
        and spec.demand <= executor.resources.initial)
    if has_code and fits and stays:
        return EdgeDecision(True, predicted_completion=predicted, time_in_range=left)
    leaves_first = left * 1_000_000 < run
    return EdgeDecision(False, adhoc_response=leaves_first, microservice_availability=has_code,
                        predicted_completion=predicted, time_in_range=left)


@dataclass
class VecFibEntry:
    name: FeName
    next_edge_face: int
    offloaded_at: int
    expiry: int


class VecFib:
    """Requests recently offloaded edge-to-edge, keyed by canonical name."""

    def __init__(self, lifetime: int = 2_000_000):
        self.lifetime = lifetime
        self.entries: dict[str, VecFibEntry] = {}
        self.expired = 0

    def _purge(self, now: int) -> None:
        dead = [k for k, e in self.entries.items() if e.expiry <= now]
        for k in dead:
            del self.entries[k]
        self.expired += len(dead)

    def count(self, face: int, now: int) -> int:
        self._purge(now)
        return sum(1 for e in self.entries.values() if e.next_edge_face == face)

    def record(self, name: FeName, face: int, now: int) -> VecFibEntry:
        e = VecFibEntry(name, face, now, now + self.lifetime)
        self.entries[serialize_name(name)] = e
        return e

    def remove(self, name: FeName) -> Optional[VecFibEntry]:
        return self.entries.pop(serialize_name(name), None)

    def __len__(self):
        return len(self.entries)


@dataclass
class VfcFibEntry:
    fog_face: int
    outstanding: int = 0
    names: set[str] = field(default_factory=set)


class VfcFib:
    """Per-fog count of offloaded requests still awaiting results."""

    def __init__(self):
        self.entries: dict[int, VfcFibEntry] = {}

    def register(self, fog_face: int) -> None:
        self.entries.setdefault(fog_face, VfcFibEntry(fog_face))

    def select(self) -> Optional[int]:
        if not self.entries:
            return None
        return min(self.entries.values(), key=lambda e: (e.outstanding, e.fog_face)).fog_face

    def add(self, fog_face: int, name: FeName) -> None:
        e = self.entries[fog_face]
        key = serialize_name(name)
        if key not in e.names:
            e.names.add(key)
            e.outstanding += 1

    def complete(self, name: FeName) -> Optional[int]:
        key = serialize_name(name)
        for e in self.entries.values():
            if key in e.names:
                e.names.discard(key)
                e.outstanding -= 1
                return e.fog_face
        return None


class NoFogAvailable(Exception):
    pass


def bridge_decide(vec: VecFib, vfc: VfcFib, next_edge_face: int, now: int,
                  threshold: int = 0) -> tuple[str, int]:
    """Return ``("edge", face)`` or ``("fog", face)``; falls back to the edge without fogs."""
    if vec.count(next_edge_face, now) <= threshold:
        return ("edge", next_edge_face)
    fog = vfc.select()
    if fog is None:
        return ("edge", next_edge_face)
    return ("fog", fog)


# -- nodes -------------------------------------------------------------------

class EdgeNode:
    """Roadside edge: faces 0=app, 1=ad-hoc road radio, 2=bridge."""

    def __init__(self, net: "Network", node_id: str, index: int, position: float,
                 executor: Executor, code: set[str], access_store: AccessStore):
        self.net = net
        self.node_id = node_id
        self.index = index
        self._position = position
        self.executor = executor
        self.code = code
        self.access = access_store
        self.fwd = net.make_forwarder(node_id)
        region = net.region
        self.fwd.fib.add(region, [APP_FACE])
        self.fwd.fib.add(region[:1], [BRIDGE_FACE])
        self.awaiting_sync: list[tuple[Interest, str]] = []
        self.sync_in_progress = False
        self.sync_seq = 0
        self.pending_code: dict[str, list[tuple[Interest, MicroserviceSpec]]] = {}
        self.offloaded_from_bridge: dict[str, Interest] = {}
        self.code_unavailable = 0
        self.overflow_bounces = 0

    def position(self, now: int) -> float:
        return self._position

    # packet entry point
    def receive(self, face: int, packet, sender: str, attachment=None) -> None:
        now = self.net.now
        if isinstance(packet, Interest):
            act = self.fwd.on_interest(face, packet, now)
            if act.verdict == "cache_hit":
                self._emit(act.sends)
            elif act.verdict == "forwarded":
                for f, i in act.sends:
                    if f != APP_FACE:
                        self.net.send(self, f, i)
                    elif face == ADHOC_FACE:
                        self.on_consumer_interest(i, sender)
                    else:
                        self.on_offloaded_interest(i)
            return
        d: Data = packet
        if (face == BRIDGE_FACE and d.adhoc_response and isinstance(d.payload, ComputedResult)
                and d.name not in self.fwd.pit):
            # result routed here for the moved consumer: re-emit on the radio
            self.fwd.cs.insert(d, now, self.net.freshness(d.name))
            self.net.log_decision(d.name, None, f"{self.node_id}:adhoc")
            self.net.send(self, ADHOC_FACE, d)
            return
        act = self.fwd.on_data(face, d, now)
        self._emit(act.sends)

    def _emit(self, sends) -> None:
        for f, pkt in sends:
            if f == APP_FACE:
                self.on_app_data(pkt)
            else:
                self.net.send(self, f, pkt)

    # consumer-facing half
    def on_consumer_interest(self, i: Interest, consumer: str) -> None:
        spec = self.net.catalog.get(i.name.microservice)
        if spec is None:
            self._reject(i, "unknown_service")
            return
        if spec.protected:
            try:
                ok = verify(self.access, i, protected=True)
            except MissingAccessRights:
                self._reject(i, "missing_access_rights")
                return
            if not ok:
                if i.access_rights in self.access.records:
                    self._reject(i, "access_denied")
                    return
                self.awaiting_sync.append((i, consumer))
                self._start_sync()
                return
            self.net.metrics.allow(i.name)
        self._dispatch(i, consumer, spec)

    def _reject(self, i: Interest, reason: str) -> None:
        self.fwd.pit.remove(i.name)
        self.net.metrics.drop(i.name, reason)

    def _dispatch(self, i: Interest, consumer: str, spec: MicroserviceSpec) -> None:
        now = self.net.now
        kin = self.net.kinematics_of(consumer, now)
        decision = edge_decide(self.executor, spec, spec.service in self.code, kin,
                               self._position, self.net.adhoc_range, now, self.net.road_length,
                               may_queue=self.net.mode == "EdgeOnly")
        if self.net.mode == "CloudOnly":
            decision = replace(decision, execute_local=False)
        if decision.execute_local:
            self.net.log_decision(i.name, 1, f"{self.node_id}:local")
            self._run(i, spec, case=1)
            return
        out = replace(i, offloading=True, adhoc_response=decision.adhoc_response,
                      microservice_availability=decision.microservice_availability)
        act = self.fwd.on_interest(APP_FACE, out, now, out_faces=[BRIDGE_FACE])
        self.net.log_decision(i.name, None, f"{self.node_id}:offload")
        for f, pkt in act.sends:
            self.net.send(self, f, pkt)

    # bridge-facing half
    def on_offloaded_interest(self, i: Interest) -> None:
        if i.name.microservice == HMM_SYNC:
            return
        spec = self.net.catalog[i.name.microservice]
        key = serialize_name(i.name)
        self.offloaded_from_bridge[key] = i
        if spec.service in self.code:
            self._run(i, spec, case=2)
        elif i.microservice_availability:
            ack = Data(i.name, MicroserviceCode(spec.service, 0), microservice_fetch=True)
            self.pending_code.setdefault(key, []).append((i, spec))
            self._emit(self.fwd.on_data(APP_FACE, ack, self.net.now).sends)
        else:
            # nobody on the path holds the code
            self.code_unavailable += 1
            self._bounce(i)

    def _bounce(self, i: Interest) -> None:
        """Hand an offloaded request back to the bridge, which sends it to the cloud."""
        self.offloaded_from_bridge.pop(serialize_name(i.name), None)
        self.fwd.pit.remove(i.name)
        self.net.send(self, BRIDGE_FACE, i)

    def on_app_data(self, d: Data) -> None:
        key = serialize_name(d.name)
        if isinstance(d.payload, HmmBatch):
            self._on_hmm_batch(d)
        elif d.microservice_fetch:
            # we offloaded this request; ship the code over the reversed path
            spec = self.net.catalog[d.payload.microservice]
            code = Data(d.name, MicroserviceCode(spec.service, spec.code_size))
            self._emit(self.fwd.on_data(APP_FACE, code, self.net.now).sends)
        elif isinstance(d.payload, MicroserviceCode) and key in self.pending_code:
            self.code.add(d.payload.microservice)
            for i, spec in self.pending_code.pop(key):
                self._run(i, spec, case=2)

    # execution
    def _run(self, i: Interest, spec: MicroserviceSpec, case: int) -> None:
        job = Job(spec, i.name, self.net.now, context=(i, case))
        if self.executor.submit(job, self.net.now, self._started) is not None:
            return
        if case == 2:
            self.overflow_bounces += 1
            self._bounce(i)
        else:
            self.fwd.pit.remove(i.name)
            self.net.metrics.drop(i.name, "queue_overflow")

    def _started(self, inst, job) -> None:
        i, case = job.context
        self.net.metrics.executed(i.name, case, self.node_id, job.spec)
        self.net.schedule_completion(self, inst)

    def on_exec_complete(self, inst_id: str) -> None:
        now = self.net.now
        inst, job = self.executor.complete(inst_id, now, self._started)
        i, case = job.context
        offloaded = self.offloaded_from_bridge.pop(serialize_name(i.name), None)
        adhoc = bool(offloaded and offloaded.adhoc_response)
        d = Data(i.name, ComputedResult(self.node_id), adhoc_response=adhoc)
        act = self.fwd.on_data(APP_FACE, d, now)
        self._emit(act.sends)
        if adhoc and all(f != ADHOC_FACE for f, _ in act.sends):
            self.net.send(self, ADHOC_FACE, d)

    # access store synchronization
    def _start_sync(self) -> None:
        if self.sync_in_progress:
            return
        self.sync_in_progress = True
        self._send_sync()

    def _send_sync(self) -> None:
        self.sync_seq += 1
        name = FeName(*self.net.region, HMM_SYNC, (self.node_id, str(self.sync_seq)))
        i = Interest(name, self.net.nonce(), last_sync_time=self.access.last_sync_time)
        act = self.fwd.on_interest(APP_FACE, i, self.net.now, out_faces=[BRIDGE_FACE])
        for f, pkt in act.sends:
            self.net.send(self, f, pkt)

    def _on_hmm_batch(self, d: Data) -> None:
        batch: HmmBatch = d.payload
        apply_batch(self.access, batch.records, batch.batch_max_time)
        if d.more_access_rights:
            self._send_sync()
            return
        self.sync_in_progress = False
        waiting, self.awaiting_sync = self.awaiting_sync, []
        for i, consumer in waiting:
            spec = self.net.catalog[i.name.microservice]
            if verify(self.access, i, protected=True):
                self.net.metrics.allow(i.name)
                self._dispatch(i, consumer, spec)
            else:
                self._reject(i, "access_denied")


class BridgeNode:
    """Bridge router. Face k+1 leads to edge k; the two faces after the edges reach the fog gateway and the cloud."""

    def __init__(self, net: "Network", node_id: str, n_edges: int, fog_faces: list[int],
                 cloud_face: int, threshold: int = 0, vec_lifetime: int = 2_000_000):
        self.net = net
        self.node_id = node_id
        self.n_edges = n_edges
        self.cloud_face = cloud_face
        self.threshold = threshold
        self.fwd = net.make_forwarder(node_id)
        self.fwd.fib.add(net.region[:1], [cloud_face])
        self.vec = VecFib(vec_lifetime)
        self.vfc = VfcFib()
        for f in fog_faces:
            self.vfc.register(f)
        self.fog_faces = set(fog_faces)
        self.counters = {"no_fog": 0, "redirect": 0}

    def position(self, now: int) -> float:
        return 0.0

    def edge_face(self, index: int) -> int:
        return index % self.n_edges + 1

    def next_edge_face(self, face: int) -> int:
        return self.edge_face(face - 1 + self.net.direction)

    def is_edge_face(self, face: int) -> bool:
        return 1 <= face <= self.n_edges

    def receive(self, face: int, packet, sender: str, attachment=None) -> None:
        if isinstance(packet, Interest):
            self._on_interest(face, packet)
        else:
            self._on_data(face, packet)

    def _on_interest(self, face: int, i: Interest) -> None:
        now = self.net.now
        if not (i.offloading and self.is_edge_face(face)):
            self._send_all(self.fwd.on_interest(face, i, now).sends)
            return
        entry = self.fwd.pit.get(i.name, now)
        if entry is not None and face in entry.outgoing and i.nonce in entry.nonces:
            # next edge could not obtain the code: redirect the request to the cloud
            self.counters["redirect"] += 1
            self.vec.remove(i.name)
            entry.outgoing = {self.cloud_face}
            self.net.log_decision(i.name, None, f"{self.node_id}:cloud")
            self.net.send(self, self.cloud_face, replace(i, hop_budget=i.hop_budget - 1))
            return

        mode = self.net.mode
        nxt = self.next_edge_face(face)
        if mode == "CloudOnly":
            kind, out = "cloud", self.cloud_face
        elif mode == "EdgeOnly":
            if self.vec.count(nxt, now) <= self.threshold:
                kind, out = "edge", nxt
            else:
                kind, out = "cloud", self.cloud_face
        else:
            if not self.vfc.entries:
                self.counters["no_fog"] += 1
            kind, out = bridge_decide(self.vec, self.vfc, nxt, now, self.threshold)

        act = self.fwd.on_interest(face, i, now, out_faces=[out])
        if act.verdict != "forwarded":
            self._send_all(act.sends)  # a cache hit answers here
            return
        if kind == "edge":
            self.vec.record(i.name, out, now)
            self.net.log_decision(i.name, 2, f"{self.node_id}:face{out}")
        elif kind == "fog":
            self.vfc.add(out, i.name)
            self.net.log_decision(i.name, 3, f"{self.node_id}:face{out}")
        else:
            self.net.log_decision(i.name, None, f"{self.node_id}:cloud")
        self._send_all(act.sends)

    def _on_data(self, face: int, d: Data) -> None:
        now = self.net.now
        if isinstance(d.payload, ComputedResult):
            self.bridge_on_data(face, d, now)
            return
        self._send_all(self.fwd.on_data(face, d, now).sends)

    def bridge_on_data(self, face: int, d: Data, now: int) -> None:
        self.vfc.complete(d.name)
        self.vec.remove(d.name)
        if not d.adhoc_response:
            self._send_all(self.fwd.on_data(face, d, now).sends)
            return
        entry = self.fwd.pit.get(d.name, now)
        if entry is None:
            self.fwd.counters["unsolicited"] += 1
            return
        self.fwd.pit.remove(d.name)
        origins = sorted(f for f in entry.incoming if self.is_edge_face(f))
        for origin in origins:
            target = self.next_edge_face(origin)
            if target != face:
                self.net.send(self, target, d)

    def _send_all(self, sends) -> None:
        for f, pkt in sends:
            self.net.send(self, f, pkt)
