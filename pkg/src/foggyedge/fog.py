"""Vehicular fog gateway (VFG) and the parked vehicles it coordinates.

The VFG keeps the VF-RAT, one row per parked vehicle, and uses it to admit
vehicles, place offloaded requests and move running instances off vehicles
that leave.  Parked vehicles are reached over the lot's ad-hoc channel.

The VF-RAT holds the gateway's own view of each vehicle's resources.  A
vehicle keeps a separate ledger; the gateway reserves on dispatch and frees
on the returned result, so its view never shows more headroom than the
vehicle really has.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

from .compute import (Instance, MicroserviceSpec, NodeResources, admit,
                      exec_ticks, finish_instance, release, resume_instance,
                      snapshot_instance)
from .forwarder import APP_FACE
from .naming import FeName, serialize_name
from .packet import (CODE, VFG_DEPART, VFG_EXIT, VFG_PARK, AdmissionInfo,
                     ComputedResult, Data, HandoverTarget, Interest,
                     MicroserviceCode, SlotAssignment)

if TYPE_CHECKING:
    from .network import Network

HANDOVER_STATE_BYTES = 4096

VFG_BRIDGE_FACE = 1
VFG_CLOUD_FACE = 2
VFG_LOT_FACE = 3
VEHICLE_LOT_FACE = 1

__all__ = [
    "LotFull",
    "NoTargetVehicle",
    "ParkedVehicle",
    "VfRat",
    "VfRatEntry",
    "VfgNode",
    "admit_vehicle",
    "dispatch",
    "plan_handover",
]


class LotFull(Exception):
    pass


class NoTargetVehicle(Exception):
    pass


@dataclass
class VfRatEntry:
    vehicle_id: str
    resources: NodeResources
    slot: int
    estimated_departure: int
    running: dict[str, MicroserviceSpec] = field(default_factory=dict)  # request name -> spec
    departing: bool = False

    def reserved(self) -> int:
        return sum(s.demand for s in self.running.values())


class VfRat:
    def __init__(self, slots: int):
        self.slots = slots
        self.entries: dict[str, VfRatEntry] = {}

    def free_slot(self) -> Optional[int]:
        taken = {e.slot for e in self.entries.values()}
        return next((s for s in range(self.slots) if s not in taken), None)

    def erase(self, vehicle_id: str) -> Optional[VfRatEntry]:
        return self.entries.pop(vehicle_id, None)

    def consistent(self) -> bool:
        lhs = sum(e.resources.available + e.reserved() for e in self.entries.values())
        return lhs == sum(e.resources.initial for e in self.entries.values())

    def dump(self) -> str:
        lines = []
        for e in sorted(self.entries.values(), key=lambda e: e.slot):
            lines.append(f"{e.vehicle_id} {e.slot} {e.resources.available}/{e.resources.initial} "
                         f"{e.estimated_departure} {','.join(sorted(e.running)) or '-'}")
        return "\n".join(lines)

    def __len__(self):
        return len(self.entries)


def admit_vehicle(rat: VfRat, vehicle_id: str, info: AdmissionInfo, now: int,
                  speed_factor: float = 1.0) -> VfRatEntry:
    """Give the vehicle the lowest free slot and a VF-RAT row."""
    slot = rat.free_slot()
    if slot is None:
        raise LotFull(vehicle_id)
    entry = VfRatEntry(vehicle_id, NodeResources(info.available_resources, speed_factor=speed_factor),
                       slot, now + info.estimated_parking_time)
    rat.entries[vehicle_id] = entry
    return entry


def _eligible(rat: VfRat, spec: MicroserviceSpec, now: int, exclude: str = "") -> list[VfRatEntry]:
    out = []
    for e in rat.entries.values():
        if e.vehicle_id == exclude or e.departing:
            continue
        need = exec_ticks(spec.base_ticks, e.resources.speed_factor)
        if e.resources.available >= spec.demand and e.estimated_departure - now >= need:
            out.append(e)
    return out


def _best(cands: list[VfRatEntry]) -> Optional[VfRatEntry]:
    # longest stay, then most headroom, then lowest slot
    if not cands:
        return None
    return min(cands, key=lambda e: (-e.estimated_departure, -e.resources.available, e.slot))


def dispatch(rat: VfRat, spec: MicroserviceSpec, now: int) -> Optional[VfRatEntry]:
    """Vehicle that stays longest among those able to finish; None means offload to the cloud."""
    return _best(_eligible(rat, spec, now))


def plan_handover(rat: VfRat, departing: str, now: int) -> list[tuple[str, Optional[VfRatEntry]]]:
    """Choose and reserve a target for each request running on ``departing``."""
    entry = rat.entries[departing]
    entry.departing = True
    plan = []
    for name in sorted(entry.running):
        spec = entry.running.pop(name)
        release(entry.resources, spec)
        target = _best(_eligible(rat, spec, now, exclude=departing))
        if target is not None:
            admit(target.resources, spec)
            target.running[name] = spec
        plan.append((name, target))
    return plan


class VfgNode:
    """Gateway faces: 0=app, 1=bridge, 2=cloud (both wired), 3=lot radio."""

    def __init__(self, net: "Network", node_id: str, position: float, slots: int):
        self.net = net
        self.node_id = node_id
        self._position = position
        self.rat = VfRat(slots)
        self.fwd = net.make_forwarder(node_id)
        self.fwd.fib.add(net.region, [APP_FACE])
        self.requests: dict[str, Interest] = {}
        self.host_of: dict[str, str] = {}
        self.counters = {"to_cloud": 0, "no_target": 0, "lot_full": 0, "handovers": 0}

    def position(self, now: int) -> float:
        return self._position

    def receive(self, face: int, packet, sender: str, attachment=None) -> None:
        now = self.net.now
        if isinstance(packet, Interest):
            act = self.fwd.on_interest(face, packet, now)
            for f, pkt in act.sends:
                if f == APP_FACE:
                    self.on_app_interest(pkt, sender)
                else:
                    self._send(f, pkt)
            return
        if isinstance(packet.payload, ComputedResult):
            self._on_result(face, packet, sender)
            return
        self._emit(self.fwd.on_data(face, packet, now).sends)

    def _send(self, face: int, pkt, dst: Optional[str] = None) -> None:
        self.net.send(self, face, pkt, dst=dst)

    def _emit(self, sends, dst: Optional[str] = None) -> None:
        for f, pkt in sends:
            self._send(f, pkt, dst=dst if f == VFG_LOT_FACE else None)

    def _respond(self, d: Data, dst: Optional[str] = None) -> None:
        self._emit(self.fwd.on_data(APP_FACE, d, self.net.now).sends, dst)

    def on_app_interest(self, i: Interest, sender: str) -> None:
        svc = i.name.microservice
        now = self.net.now
        if svc == VFG_PARK:
            vid = i.name.params[0]
            try:
                slot = admit_vehicle(self.rat, vid, i.admission_info, now,
                                     self.net.fog_speed).slot
            except LotFull:
                self.counters["lot_full"] += 1
                slot = -1
            self._respond(Data(i.name, SlotAssignment(vid, slot)), vid)
        elif svc == VFG_DEPART:
            self._handover(i)
        elif svc == VFG_EXIT:
            vid = i.name.params[0]
            self.rat.erase(vid)
            self._respond(Data(i.name, SlotAssignment(vid, -1)), vid)
        elif svc == CODE:
            spec = self.net.catalog[i.name.params[0]]
            self._respond(Data(i.name, MicroserviceCode(spec.service, spec.code_size)), sender)
        else:
            self._dispatch(i)

    def _dispatch(self, i: Interest) -> None:
        now = self.net.now
        spec = self.net.catalog[i.name.microservice]
        key = serialize_name(i.name)
        self.requests[key] = i
        target = dispatch(self.rat, spec, now)
        if target is None:
            self._to_cloud(i)
            return
        admit(target.resources, spec)
        target.running[key] = spec
        self.host_of[key] = target.vehicle_id
        self.net.log_decision(i.name, 3, f"{self.node_id}:{target.vehicle_id}")
        act = self.fwd.on_interest(APP_FACE, i, now, out_faces=[VFG_LOT_FACE])
        self._emit(act.sends, target.vehicle_id)

    def _to_cloud(self, i: Interest) -> None:
        self.counters["to_cloud"] += 1
        self.net.log_decision(i.name, 4, f"{self.node_id}:cloud")
        act = self.fwd.on_interest(APP_FACE, replace(i, offloading=True), self.net.now,
                                   out_faces=[VFG_CLOUD_FACE])
        self._emit(act.sends)

    def _on_result(self, face: int, d: Data, sender: str) -> None:
        key = serialize_name(d.name)
        host = self.host_of.pop(key, None)
        self.requests.pop(key, None)
        # free whichever reservation still covers this request
        for vid in (sender, host):
            e = self.rat.entries.get(vid) if vid else None
            if e is not None and key in e.running:
                release(e.resources, e.running.pop(key))
        entry = self.fwd.pit.get(d.name, self.net.now)
        if entry is not None and entry.adhoc_response and not d.adhoc_response:
            d = replace(d, adhoc_response=True)
        self._emit(self.fwd.on_data(face, d, self.net.now).sends)

    def _handover(self, i: Interest) -> None:
        now = self.net.now
        vid = i.name.params[0]
        assignments: list[tuple[str, str]] = []
        if vid in self.rat.entries:
            for key, target in plan_handover(self.rat, vid, now):
                if target is not None:
                    self.counters["handovers"] += 1
                    self.host_of[key] = target.vehicle_id
                    assignments.append((key, target.vehicle_id))
                    continue
                # NoTargetVehicle: the cloud restarts the request
                self.counters["no_target"] += 1
                self.host_of.pop(key, None)
                assignments.append((key, ""))
                req = self.requests.get(key)
                entry = self.fwd.pit.get(req.name, now) if req is not None else None
                if entry is not None:
                    entry.outgoing.discard(VFG_LOT_FACE)
                    self._to_cloud(req)
        self._respond(Data(i.name, HandoverTarget(vid, tuple(assignments))), vid)


class ParkedVehicle:
    """A vehicle in the lot lending its computer to the fog."""

    def __init__(self, net: "Network", vin: str, position: float, resources: int,
                 estimated_stay: int, actual_stay: int, speed_factor: float = 1.0):
        self.net = net
        self.node_id = vin
        self._position = position
        self.resources = NodeResources(resources, speed_factor=speed_factor)
        self.estimated_stay = estimated_stay
        self.actual_stay = actual_stay
        self.code: set[str] = set()
        self.waiting_code: dict[str, list[Interest]] = {}
        self.running: dict[str, tuple[Instance, Interest]] = {}
        self.done: set[str] = set()
        self.handed: dict[str, str] = {}  # request name -> vehicle it went to
        self.state = "arriving"  # arriving | parked | departing | gone
        self._seq = 0

    def position(self, now: int) -> float:
        return self._position

    @property
    def vfg(self) -> str:
        return self.net.vfg.node_id

    def _interest(self, svc: str, *params: str, **kw) -> Interest:
        return Interest(FeName(*self.net.region, svc, params), self.net.nonce(), **kw)

    def _to_vfg(self, pkt, attachment=None, dst: Optional[str] = None) -> None:
        self.net.send(self, VEHICLE_LOT_FACE, pkt, dst=dst or self.vfg, attachment=attachment)

    def arrive(self) -> None:
        self.net.lot.join(self)
        info = AdmissionInfo(self.estimated_stay, self.resources.initial)
        self._to_vfg(self._interest(VFG_PARK, self.node_id, admission_info=info))

    def receive(self, face: int, packet, sender: str, attachment=None) -> None:
        if self.state == "gone":
            return
        if isinstance(packet, Interest):
            self._on_request(packet)
            return
        p = packet.payload
        if isinstance(p, SlotAssignment) and p.vehicle_id == self.node_id:
            self._on_slot(p)
        elif isinstance(p, HandoverTarget) and p.departing == self.node_id:
            self._on_handover_target(p)
        elif isinstance(p, MicroserviceCode) and attachment is not None:
            self._on_transfer(packet, attachment)
        elif isinstance(p, MicroserviceCode) and packet.name.microservice == CODE:
            self._on_code(p)

    def _on_slot(self, p: SlotAssignment) -> None:
        if self.state == "arriving":
            if p.slot < 0:
                self._leave()
                return
            self.state = "parked"
            self.net.set_timer(self, self.actual_stay, "depart")
        elif self.state == "departing":
            self._leave()

    def _leave(self) -> None:
        self.state = "gone"
        self.net.lot.leave(self.node_id)
        self.net.vehicle_left(self)

    def on_timer(self, what: str) -> None:
        if what == "depart" and self.state == "parked":
            self.state = "departing"
            self._to_vfg(self._interest(VFG_DEPART, self.node_id))

    # execution
    def _on_request(self, i: Interest) -> None:
        key = serialize_name(i.name)
        if key in self.handed or key in self.done or key in self.running:
            return
        svc = i.name.microservice
        if svc in self.code:
            self._start(i)
            return
        first = svc not in self.waiting_code
        self.waiting_code.setdefault(svc, []).append(i)
        if first:
            self._to_vfg(self._interest(CODE, svc))

    def _on_code(self, p: MicroserviceCode) -> None:
        self.code.add(p.microservice)
        for i in self.waiting_code.pop(p.microservice, []):
            if serialize_name(i.name) not in self.handed:
                self._start(i)

    def _start(self, i: Interest) -> None:
        spec = self.net.catalog[i.name.microservice]
        if not admit(self.resources, spec):
            # the gateway's view lags ours only toward less headroom, so this is a bug
            raise RuntimeError(f"{self.node_id}: dispatched beyond capacity")
        self._seq += 1
        inst = Instance(f"{self.node_id}#{self._seq}", spec, i.name, self.net.now,
                        spec.base_ticks, self.node_id, speed_factor=self.resources.speed_factor)
        self._run(inst, i, case=3)

    def _run(self, inst: Instance, i: Interest, case: int) -> None:
        self.running[serialize_name(inst.request_name)] = (inst, i)
        self.net.metrics.executed(i.name, case, self.node_id, inst.spec)
        self.net.schedule_completion(self, inst)

    def on_exec_complete(self, inst_id: str) -> None:
        key = next((k for k, (inst, _) in self.running.items() if inst.id == inst_id), None)
        if key is None or self.state == "gone":
            return  # moved away before finishing
        inst, i = self.running.pop(key)
        release(self.resources, inst.spec)
        self.done.add(key)
        self.net.metrics.instance_finished(finish_instance(inst))
        self._to_vfg(Data(i.name, ComputedResult(self.node_id), adhoc_response=i.adhoc_response))

    # handover
    def _on_handover_target(self, p: HandoverTarget) -> None:
        now = self.net.now
        for key, target in p.assignments:
            inst = i = None
            if key in self.running:
                inst, i = self.running.pop(key)
                release(self.resources, inst.spec)
                inst = snapshot_instance(inst, now)
            elif key in self.done:
                continue
            else:
                i = self._take_waiting(key)
                if i is None:
                    # dispatch still in flight; hand over an unstarted instance
                    i = self.net.vfg.requests.get(key)
                if i is None:
                    continue
                spec = self.net.catalog[i.name.microservice]
                self._seq += 1
                inst = Instance(f"{self.node_id}#{self._seq}", spec, i.name, now, spec.base_ticks,
                                self.node_id, speed_factor=self.resources.speed_factor)
            self.handed[key] = target
            if target:
                self._transfer(inst, i, target)
        self._to_vfg(self._interest(VFG_EXIT, self.node_id))

    def _take_waiting(self, key: str) -> Optional[Interest]:
        for svc, lst in self.waiting_code.items():
            for i in lst:
                if serialize_name(i.name) == key:
                    lst.remove(i)
                    return i
        return None

    def _transfer(self, inst: Instance, i: Interest, target: str) -> None:
        spec = inst.spec
        d = Data(i.name, MicroserviceCode(spec.service, spec.code_size + HANDOVER_STATE_BYTES))
        self.net.send(self, VEHICLE_LOT_FACE, d, dst=target, attachment=(inst, i))

    def _on_transfer(self, d: Data, attachment) -> None:
        inst, i = attachment
        key = serialize_name(i.name)
        if key in self.handed:
            # we are leaving too: pass it on, or drop it when there is nowhere to go
            if self.handed[key]:
                self._transfer(inst, i, self.handed[key])
            return
        self.code.add(inst.spec.service)
        if not admit(self.resources, inst.spec):
            raise RuntimeError(f"{self.node_id}: handover beyond capacity")
        self._run(resume_instance(inst, self.node_id, self.resources.speed_factor, self.net.now),
                  i, case=3)
