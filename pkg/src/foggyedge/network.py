"""Builds the topology and delivers packets between nodes; also drives traffic and run-end checks.

A :class:`Network` owns the event engine and every node of one scenario.
Nodes talk to it through a small surface (``send``, ``set_timer``,
``schedule_completion``, ``log_decision`` and a few lookups) and never
touch each other directly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .access import VIN_ALPHABET, AccessStore, compute_hmac, sync_step
from .compute import (Executor, Instance, Job, NodeResources, ticks)
from .config import ScenarioConfig
from .edge import ADHOC_FACE, BRIDGE_FACE, BridgeNode, EdgeNode
from .engine import (AdhocChannel, Engine, Event, EventKind, Kinematics, Link,
                     WaypointTrack, load_waypoints)
from .fog import (VFG_BRIDGE_FACE, VFG_CLOUD_FACE, VFG_LOT_FACE, VEHICLE_LOT_FACE,
                  ParkedVehicle, VfgNode)
from .forwarder import APP_FACE, Forwarder
from .metrics import Metrics
from .naming import FeName, serialize_name
from .packet import (HMM_SYNC, ComputedResult, Data, HmmBatch, Interest,
                     encode, tlv, wire_size)

REGION = ("Korea", "Seoul", "Itaewon")
CLOUD_BRIDGE_FACE = 1
CLOUD_VFG_FACE = 2
CONSUMER_FACE = 1

# trace record types
TR_SEND = 0x50
TR_DECISION = 0x51
TR_TIME = 0x52
TR_NODE = 0x53
TR_PACKET = 0x54
TR_CASE = 0x55
TR_WHERE = 0x56
TR_NAME = 0x57

STREAMS = ("arrivals", "consumer", "service", "nonce", "mobility", "vin", "parking", "code")

__all__ = ["Consumer", "CloudNode", "Hop", "InvariantViolation", "Network", "REGION",
           "read_trace"]


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Hop:
    time: int
    sender: str
    receiver: str
    kind: str  # Interest | Data
    name: str
    payload: str = ""  # Data payload class name
    size: int = 0


class Consumer:
    """A moving vehicle that issues requests to the edge it is closest to."""

    def __init__(self, net: "Network", node_id: str, vin: str, kin: Kinematics,
                 track: Optional[WaypointTrack] = None):
        self.net = net
        self.node_id = node_id
        self.vin = vin
        self.kin = kin
        self.track = track
        self.pending: dict[str, int] = {}
        self.seq = 0

    def kinematics(self, now: int) -> Kinematics:
        return self.track.kinematics_at(now) if self.track else self.kin

    def position(self, now: int) -> float:
        return self.kinematics(now).at(now) % self.net.road_length

    def issue(self, service: str) -> Optional[Interest]:
        now = self.net.now
        edge = self.net.nearest_edge(self.position(now))
        self.seq += 1
        name = FeName(*self.net.region, service, (self.node_id, str(self.seq)))
        self.net.metrics.generated(name, self.node_id, now)
        if edge is None:
            self.net.metrics.drop(name, "no_coverage")
            return None
        spec = self.net.catalog[service]
        rights = compute_hmac(name, self.vin) if spec.protected else None
        i = Interest(name, self.net.nonce(), access_rights=rights)
        key = serialize_name(name)
        self.pending[key] = (i, edge.node_id, now)
        self.net.send(self, CONSUMER_FACE, i, dst=edge.node_id)
        self.net.set_timer(self, self.net.retx_interval, key)
        return i

    def on_timer(self, key: str) -> None:
        # re-express a pending request once we are under a different edge
        entry = self.pending.get(key)
        if entry is None:
            return
        i, last, created = entry
        now = self.net.now
        if now - created >= self.net.retx_give_up:
            return
        edge = self.net.nearest_edge(self.position(now))
        if edge is not None and edge.node_id != last:
            i = replace(i, nonce=self.net.nonce())
            self.pending[key] = (i, edge.node_id, created)
            self.net.metrics.counters["retransmissions"] += 1
            self.net.send(self, CONSUMER_FACE, i, dst=edge.node_id)
        self.net.set_timer(self, self.net.retx_interval, key)

    def receive(self, face: int, packet, sender: str, attachment=None) -> None:
        if not isinstance(packet, Data):
            return
        key = serialize_name(packet.name)
        if self.pending.pop(key, None) is not None:
            self.net.metrics.satisfied(packet.name, self.net.now)


class CloudNode:
    """Remote data center: unbounded capacity, every microservice, the master Access Store."""

    def __init__(self, net: "Network", node_id: str, store: AccessStore, speed_factor: float,
                 batch_limit: int):
        self.net = net
        self.node_id = node_id
        self.store = store
        self.batch_limit = batch_limit
        self.fwd = net.make_forwarder(node_id)
        self.fwd.fib.add(net.region[:1], [APP_FACE])
        self.executor = Executor(node_id, NodeResources(10**12, speed_factor=speed_factor),
                                 queue_capacity=0)

    def position(self, now: int) -> float:
        return 0.0

    def receive(self, face: int, packet, sender: str, attachment=None) -> None:
        now = self.net.now
        if isinstance(packet, Interest):
            act = self.fwd.on_interest(face, packet, now)
            for f, pkt in act.sends:
                if f == APP_FACE:
                    self._on_app(face, pkt)
                else:
                    self.net.send(self, f, pkt)
            return
        self._emit(self.fwd.on_data(face, packet, now).sends)

    def _emit(self, sends) -> None:
        for f, pkt in sends:
            self.net.send(self, f, pkt)

    def _on_app(self, face: int, i: Interest) -> None:
        if i.name.microservice == HMM_SYNC:
            since = -1 if i.last_sync_time is None else i.last_sync_time
            batch, more = sync_step(self.store, since, self.batch_limit)
            top = max((r.created_at for r in batch), default=since)
            d = Data(i.name, HmmBatch(tuple(batch), top), more_access_rights=more)
            self._emit(self.fwd.on_data(APP_FACE, d, self.net.now).sends)
            return
        spec = self.net.catalog[i.name.microservice]
        case = 4 if face == CLOUD_VFG_FACE else None
        job = Job(spec, i.name, self.net.now, context=(i, case))
        self.executor.submit(job, self.net.now, self._started)

    def _started(self, inst: Instance, job: Job) -> None:
        i, case = job.context
        self.net.metrics.executed(i.name, case, self.node_id, job.spec, tier="cloud")
        self.net.schedule_completion(self, inst)

    def on_exec_complete(self, inst_id: str) -> None:
        inst, job = self.executor.complete(inst_id, self.net.now, self._started)
        i, _ = job.context
        d = Data(i.name, ComputedResult(self.node_id), adhoc_response=i.adhoc_response)
        self._emit(self.fwd.on_data(APP_FACE, d, self.net.now).sends)


def _vin(rng: np.random.Generator) -> str:
    return "".join(VIN_ALPHABET[k] for k in rng.integers(0, len(VIN_ALPHABET), 17))


class Network:
    def __init__(self, cfg: ScenarioConfig, rate: Optional[float] = None,
                 generate: bool = True):
        self.cfg = cfg
        self.rate = cfg.scenario_rate if rate is None else rate
        self.mode = cfg.scenario_mode
        self.direction = cfg.topology_direction
        self.region = REGION
        self.catalog = cfg.catalog()
        self.services = sorted(self.catalog)
        self.engine = Engine()
        self.metrics = Metrics()
        seeds = np.random.SeedSequence(cfg.scenario_seed).spawn(len(STREAMS))
        self.rng = {k: np.random.default_rng(s) for k, s in zip(STREAMS, seeds)}
        self.adhoc_range = cfg.link_adhoc_range_m
        self.road_length = cfg.topology_n_edges * cfg.topology_edge_spacing_m
        self.fog_speed = cfg.fog_speed_factor
        self.retx_interval = max(1, ticks(cfg.topology_consumer_retx_s))
        self.retx_give_up = ticks(cfg.topology_consumer_give_up_s)
        self.adhoc_link = Link("adhoc", cfg.link_adhoc_latency_s, cfg.link_adhoc_bandwidth,
                               cfg.link_adhoc_range_m)
        self.edge_link = Link("wired", cfg.link_edge_latency_s, cfg.link_edge_bandwidth)
        self.cloud_link = Link("wired", cfg.link_cloud_latency_s, cfg.link_cloud_bandwidth)
        self.road = AdhocChannel("road", self.adhoc_link, self.road_length)
        self.lot = AdhocChannel("lot", self.adhoc_link)
        self.nodes: dict[str, object] = {}
        self.wires: dict[tuple[str, int], tuple[str, int, Link]] = {}
        self.radio_face: dict[str, tuple[AdhocChannel, int]] = {}
        self.trace = bytearray()
        self.hops: list[Hop] = []
        self.decisions: list[tuple[int, str, Optional[int], str]] = []
        self.record_trace = cfg.output_trace
        self.vehicles: list[ParkedVehicle] = []
        self.generating = generate
        self.stop_at = ticks(cfg.scenario_duration_s)
        self.finished = False
        self._build()

    # -- node services -------------------------------------------------------

    @property
    def now(self) -> int:
        return self.engine.now

    def make_forwarder(self, node_id: str) -> Forwarder:
        c = self.cfg
        return Forwarder(node_id, ticks(c.forwarder_pit_lifetime_s), ticks(c.forwarder_rpit_lifetime_s),
                         c.forwarder_cs_capacity, freshness=self.freshness)

    def freshness(self, name: FeName) -> Optional[int]:
        spec = self.catalog.get(name.microservice)
        return ticks(spec.freshness) if spec else None

    def nonce(self) -> int:
        return int(self.rng["nonce"].integers(0, 2**64, dtype=np.uint64))

    def kinematics_of(self, consumer_id: str, now: int) -> Kinematics:
        return self.nodes[consumer_id].kinematics(now)

    def log_decision(self, name: FeName, case: Optional[int], where: str) -> None:
        key = serialize_name(name)
        self.decisions.append((self.now, key, case, where))
        if self.record_trace:
            body = (tlv(TR_TIME, struct.pack(">Q", self.now)) + tlv(TR_NAME, key.encode())
                    + tlv(TR_CASE, bytes([case or 0])) + tlv(TR_WHERE, where.encode()))
            self.trace += tlv(TR_DECISION, body)

    def schedule_completion(self, node, inst: Instance) -> None:
        self.engine.schedule(inst.completes_at(), node.node_id, EventKind.ExecComplete, inst.id)

    def set_timer(self, node, delay: int, payload) -> None:
        self.engine.after(delay, node.node_id, EventKind.TimerExpiry, payload)

    def vehicle_left(self, v: ParkedVehicle) -> None:
        self.metrics.counters["vehicles_left"] += 1

    def nearest_edge(self, position: float) -> Optional[EdgeNode]:
        best = None
        for e in self.edges:
            d = self.road.distance(position, e.position(self.now))
            if d <= self.adhoc_range and (best is None or d < best[0]):
                best = (d, e)
        return best[1] if best else None

    # -- delivery ------------------------------------------------------------

    def send(self, node, face: int, pkt, dst: Optional[str] = None, attachment=None) -> list[str]:
        now = self.now
        src = node.node_id
        size = wire_size(pkt)
        wire = self.wires.get((src, face))
        if wire is not None:
            peer, pface, link = wire
            targets = [(peer, pface)]
        else:
            channel, _ = self.radio_face[src]
            link = channel.link
            rx = channel.receivers(src, now)
            if dst is not None:
                rx = [r for r in rx if r == dst]
            targets = [(r, self.radio_face[r][1]) for r in rx]
        delay = link.delay_ticks(size)
        raw = encode(pkt) if self.record_trace else b""
        for peer, pface in targets:
            self.engine.schedule(now + delay, peer, EventKind.PacketArrival,
                                 (pface, pkt, src, attachment))
            self.hops.append(Hop(now, src, peer, type(pkt).__name__, serialize_name(pkt.name),
                                 type(pkt.payload).__name__ if isinstance(pkt, Data) else "", size))
            if self.record_trace:
                body = (tlv(TR_TIME, struct.pack(">Q", now)) + tlv(TR_NODE, src.encode())
                        + tlv(TR_NODE, peer.encode()) + tlv(TR_PACKET, raw))
                self.trace += tlv(TR_SEND, body)
        return [p for p, _ in targets]

    def _handler(self, node):
        def handle(ev: Event) -> None:
            if ev.kind is EventKind.PacketArrival:
                face, pkt, sender, attachment = ev.payload
                node.receive(face, pkt, sender, attachment)
            elif ev.kind is EventKind.ExecComplete:
                node.on_exec_complete(ev.payload)
            elif ev.kind is EventKind.TimerExpiry:
                node.on_timer(ev.payload)
        return handle

    def add_node(self, node) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node
        self.engine.register(node.node_id, self._handler(node))

    def wire(self, a: str, fa: int, b: str, fb: int, link: Link) -> None:
        self.wires[(a, fa)] = (b, fb, link)
        self.wires[(b, fb)] = (a, fa, link)

    def attach_radio(self, node, channel: AdhocChannel, face: int) -> None:
        channel.join(node)
        self.radio_face[node.node_id] = (channel, face)

    # -- topology ------------------------------------------------------------

    def _build(self) -> None:
        c = self.cfg
        n = c.topology_n_edges
        self.cloud_store = AccessStore()
        self.consumers: list[Consumer] = []
        vin_rng = self.rng["vin"]
        mob = self.rng["mobility"]
        tracks: dict[str, WaypointTrack] = load_waypoints(c.topology_waypoints) if c.topology_waypoints else {}
        ids = sorted(tracks) if tracks else [f"car{k}" for k in range(c.topology_n_consumers)]
        created = 0
        for cid in ids:
            vin = _vin(vin_rng)
            pos = float(mob.uniform(0, self.road_length))
            speed = float(mob.uniform(c.topology_consumer_speed_min, c.topology_consumer_speed_max))
            con = Consumer(self, cid, vin, Kinematics(pos, speed, self.direction, 0), tracks.get(cid))
            self.consumers.append(con)
            for svc in self.services:
                spec = self.catalog[svc]
                if spec.protected:
                    created += 1
                    self.cloud_store.register(_record(spec.name, vin, created))

        self.bridge = BridgeNode(self, "bridge", n, [n + 1] if self.mode == "FoggyEdge" else [],
                                 n + 2, c.edge_load_threshold, ticks(c.edge_vec_lifetime_s))
        self.add_node(self.bridge)
        self.cloud = CloudNode(self, "cloud", self.cloud_store, c.cloud_speed_factor,
                               c.access_batch_limit)
        self.add_node(self.cloud)
        self.wire("bridge", n + 2, "cloud", CLOUD_BRIDGE_FACE, self.cloud_link)

        code_rng = self.rng["code"]
        self.edges: list[EdgeNode] = []
        spacing = c.topology_edge_spacing_m
        for k in range(n):
            held = {s for s in self.services if code_rng.random() < c.edge_code_fraction}
            store = self.cloud_store.copy() if c.access_presync else AccessStore()
            if c.access_presync:
                store.last_sync_time = self.cloud_store.latest()
            ex = Executor(f"edge{k}", NodeResources(c.edge_resources, speed_factor=c.edge_speed_factor),
                          c.edge_queue_capacity)
            e = EdgeNode(self, f"edge{k}", k, spacing / 2 + k * spacing, ex, held, store)
            self.edges.append(e)
            self.add_node(e)
            self.attach_radio(e, self.road, ADHOC_FACE)
            self.wire(e.node_id, BRIDGE_FACE, "bridge", self.bridge.edge_face(k), self.edge_link)
        for con in self.consumers:
            self.add_node(con)
            self.attach_radio(con, self.road, CONSUMER_FACE)

        self.vfg: Optional[VfgNode] = None
        if self.mode == "FoggyEdge":
            lot_pos = self.edges[min(1, n - 1)].position(0)
            self.vfg = VfgNode(self, "vfg", lot_pos, c.fog_slots)
            self.add_node(self.vfg)
            self.attach_radio(self.vfg, self.lot, VFG_LOT_FACE)
            self.wire("vfg", VFG_BRIDGE_FACE, "bridge", n + 1, self.edge_link)
            self.wire("vfg", VFG_CLOUD_FACE, "cloud", CLOUD_VFG_FACE, self.cloud_link)
            self.engine.register("lot", self._lot_event)
            for _ in range(c.fog_initial_vehicles):
                self._new_vehicle(initial=True)
            if c.fog_arrival_rate > 0:
                self._next_vehicle_arrival()

        self.engine.register("traffic", self._traffic_event)
        if self.generating:
            self._next_request()

    # -- parked vehicles -----------------------------------------------------

    def _new_vehicle(self, initial: bool = False) -> ParkedVehicle:
        c = self.cfg
        rng = self.rng["parking"]
        est = float(rng.uniform(c.fog_stay_min_s, c.fog_stay_max_s))
        if initial and c.fog_initial_elapsed:
            # already parked for a while: only part of the stay is left
            est *= float(rng.uniform(0.0, 1.0))
        actual = est * float(rng.uniform(c.fog_stay_jitter_min, 1.0))
        v = ParkedVehicle(self, _vin(self.rng["vin"]), self.vfg.position(0), c.fog_vehicle_resources,
                          max(ticks(est), 1), max(ticks(actual), 1), c.fog_speed_factor)
        self.vehicles.append(v)
        self.add_node(v)
        self.radio_face[v.node_id] = (self.lot, VEHICLE_LOT_FACE)
        v.arrive()
        return v

    def _next_vehicle_arrival(self) -> None:
        gap = ticks(float(self.rng["parking"].exponential(1.0 / self.cfg.fog_arrival_rate)))
        if self.now + gap < self.stop_at:
            self.engine.after(gap, "lot", EventKind.TimerExpiry, "arrival")

    def _lot_event(self, ev: Event) -> None:
        self._new_vehicle()
        self._next_vehicle_arrival()

    # -- traffic -------------------------------------------------------------

    def _next_request(self) -> None:
        gap = max(1, ticks(float(self.rng["arrivals"].exponential(1.0 / self.rate))))
        if self.now + gap < self.stop_at:
            self.engine.after(gap, "traffic", EventKind.RequestGeneration)

    def _traffic_event(self, ev: Event) -> None:
        now = self.now
        covered = [c for c in self.consumers if self.nearest_edge(c.position(now)) is not None]
        pick = self.rng["consumer"].integers(0, max(len(covered), 1))
        svc = self.services[int(self.rng["service"].integers(0, len(self.services)))]
        if covered:
            covered[int(pick)].issue(svc)
        else:
            self.consumers[0].issue(svc)  # recorded and dropped as no_coverage
        self._next_request()

    def inject(self, consumer: Union[str, Consumer], service: str) -> Optional[Interest]:
        """Issue one request now (tests and demos)."""
        con = self.nodes[consumer] if isinstance(consumer, str) else consumer
        return con.issue(service)

    # -- running -------------------------------------------------------------

    def run(self, until: Optional[int] = None) -> None:
        self.engine.run(until)

    def finish(self, check: bool = True) -> None:
        """Drain pending events, then close open records and check invariants."""
        self.engine.run()
        now = self.now
        for rec in self.metrics.list():
            if not rec.done:
                rec.drop_reason = "unanswered"
                self.metrics.counters["drop_unanswered"] += 1
        leftovers = 0
        for node in self.nodes.values():
            fwd = getattr(node, "fwd", None)
            if fwd is not None:
                leftovers += len(fwd.pit)
                fwd.pit.purge_expired(math.inf)
        self.metrics.counters["pit_leftover"] = leftovers
        self.metrics.counters["vec_expired"] = self.bridge.vec.expired + len(self.bridge.vec)
        self.finished = True
        if check:
            problems = self.check_invariants()
            if problems:
                raise InvariantViolation("; ".join(problems))

    def check_invariants(self) -> list[str]:
        p = []
        for e in self.edges + [self.cloud]:
            r = e.executor.resources
            if not e.executor.idle():
                p.append(f"{e.node_id}: executor not idle ({r.available}/{r.initial})")
        for v in self.vehicles:
            if v.resources.available != v.resources.initial or v.running:
                p.append(f"{v.node_id}: {v.resources.available}/{v.resources.initial} with "
                         f"{len(v.running)} running")
        if self.vfg is not None:
            if not self.vfg.rat.consistent():
                p.append("vfg: VF-RAT resource sum mismatch")
            for entry in self.vfg.rat.entries.values():
                if entry.running or entry.resources.available != entry.resources.initial:
                    p.append(f"vfg: entry {entry.vehicle_id} still holds {sorted(entry.running)}")
        for inst in self.metrics.finished_instances:
            if inst.delivered_work() != inst.spec.base_ticks:
                p.append(f"{inst.id}: delivered {inst.delivered_work()} of {inst.spec.base_ticks} ticks")
        recs = self.metrics.list()
        sat = sum(r.satisfied_at is not None for r in recs)
        dropped = sum(r.drop_reason is not None for r in recs)
        if sat + dropped != len(recs):
            p.append(f"accounting: {len(recs)} generated != {sat} satisfied + {dropped} dropped")
        dup = [k for k, n in self.metrics.deliveries.items() if n > 1]
        if dup:
            p.append(f"{len(dup)} requests delivered more than once")
        return p

    def write_trace(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(bytes(self.trace))


def _record(service: FeName, vin: str, created: int):
    from .access import HmmRecord
    return HmmRecord(compute_hmac(service, vin), serialize_name(service), created)


def read_trace(buf: bytes) -> list[dict]:
    """Decode a trace file into a list of send and decision records."""
    from .packet import decode, iter_tlv
    out = []
    for t, body in iter_tlv(buf):
        f = list(iter_tlv(body))
        if t == TR_SEND:
            out.append({"type": "send", "time": struct.unpack(">Q", f[0][1])[0],
                        "sender": f[1][1].decode(), "receiver": f[2][1].decode(),
                        "packet": decode(f[3][1])})
        elif t == TR_DECISION:
            out.append({"type": "decision", "time": struct.unpack(">Q", f[0][1])[0],
                        "name": f[1][1].decode(), "case": f[2][1][0] or None,
                        "where": f[3][1].decode()})
        else:
            out.append({"type": f"unknown:{t:#x}"})
    return out
