import pytest
from conftest import park_consumer, quiet_config

from foggyedge.compute import DEFAULT_CATALOG, NodeResources
from foggyedge.fog import LotFull, VfRat, admit_vehicle, dispatch, plan_handover
from foggyedge.network import Network
from foggyedge.packet import AdmissionInfo

SPEC = {s.service: s for s in DEFAULT_CATALOG}
OD = SPEC["object_detection"]
S = 1_000_000


def lot(*rows, slots=20):
    rat = VfRat(slots)
    for vid, res, stay in rows:
        admit_vehicle(rat, vid, AdmissionInfo(stay, res), 0)
    return rat


def test_admission_takes_lowest_free_slot():
    rat = lot(("A", 800, 3600 * S))
    assert rat.entries["A"].slot == 0 and len(rat) == 1
    assert rat.entries["A"].estimated_departure == 3600 * S
    admit_vehicle(rat, "B", AdmissionInfo(S, 800), 0)
    assert admit_vehicle(rat, "C", AdmissionInfo(S, 800), 0).slot == 2
    rat.erase("A")
    assert admit_vehicle(rat, "D", AdmissionInfo(S, 800), 0).slot == 0


def test_lot_full():
    rat = lot(("A", 800, S), ("B", 800, S), slots=2)
    with pytest.raises(LotFull):
        admit_vehicle(rat, "C", AdmissionInfo(S, 800), 0)


def test_dispatch_prefers_longest_stay():
    rat = lot(("short", 800, 600 * S), ("long", 800, 3600 * S))
    assert dispatch(rat, OD, 0).vehicle_id == "long"


def test_dispatch_tie_breaks_on_headroom_then_slot():
    rat = lot(("a", 400, 600 * S), ("b", 800, 600 * S), ("c", 800, 600 * S))
    assert dispatch(rat, OD, 0).vehicle_id == "b"


def test_dispatch_to_cloud_without_resources():
    rat = lot(("a", 300, 600 * S))
    assert dispatch(rat, OD, 0) is None


def test_dispatch_boundary_exact_fit():
    rat = lot(("a", OD.demand, OD.base_ticks))
    assert dispatch(rat, OD, 0).vehicle_id == "a"
    rat = lot(("a", OD.demand, OD.base_ticks - 1))
    assert dispatch(rat, OD, 0) is None


def test_plan_handover_moves_reservation():
    rat = lot(("old", 800, 10 * S), ("new", 800, 600 * S))
    old = rat.entries["old"]
    old.resources.available -= OD.demand
    old.running["req"] = OD
    old.resources.held[OD.service] += 1
    plan = plan_handover(rat, "old", S)
    assert [(k, t.vehicle_id) for k, t in plan] == [("req", "new")]
    assert old.departing and not old.running and old.resources.available == 800
    assert rat.entries["new"].resources.available == 800 - OD.demand
    assert rat.consistent()
    # a departing vehicle is never a dispatch target
    assert dispatch(rat, OD, S).vehicle_id == "new"


def test_plan_handover_without_target():
    rat = lot(("old", 800, 10 * S))
    e = rat.entries["old"]
    e.resources.available -= OD.demand
    e.resources.held[OD.service] += 1
    e.running["req"] = OD
    assert plan_handover(rat, "old", S) == [("req", None)]


def test_dump_format():
    rat = lot(("B", 800, 5), ("A", 600, 9))
    rat.entries["A"].running["FE:/x/y/z|s"] = OD
    assert rat.dump().splitlines() == ["B 0 800/800 5 -", "A 1 600/600 9 FE:/x/y/z|s"]


# -- end to end ---------------------------------------------------------------------

def fog_net(n_vehicles, **kw):
    cfg = quiet_config(fog_initial_vehicles=n_vehicles, fog_initial_elapsed=False, **kw)
    net = Network(cfg, generate=False)
    net.run(S)
    assert len(net.vfg.rat) == n_vehicles
    net.edges[0].executor.resources = NodeResources(100)
    park_consumer(net, 0, 0)
    park_consumer(net, 1, 0)
    return net


def host_of_second_request(net):
    net.inject("car0", OD.service)
    net.inject("car1", OD.service)
    net.run(S + 20_000)  # dispatched and running
    key = net.metrics.list()[1].name
    host = net.vfg.host_of[key]
    return next(v for v in net.vehicles if v.node_id == host)


def test_handover_mid_execution_conserves_work():
    net = fog_net(2)
    v = host_of_second_request(net)
    net.set_timer(v, 100_000, "depart")
    net.finish()
    a, b = net.metrics.list()
    assert b.case == 3 and b.satisfied_at is not None
    assert b.node != v.node_id
    assert net.vfg.counters["handovers"] == 1
    moved = [i for i in net.metrics.finished_instances]
    assert len(moved) == 1
    hosts = [h for h, _ in moved[0].work_log]
    assert hosts[0] == v.node_id and hosts[-1] == b.node
    assert moved[0].delivered_work() == OD.base_ticks
    assert v.node_id not in net.vfg.rat.entries


def test_handover_without_target_finishes_at_cloud():
    net = fog_net(1)
    v = host_of_second_request(net)
    net.set_timer(v, 100_000, "depart")
    net.finish()
    b = net.metrics.list()[1]
    assert b.satisfied_at is not None and b.tier == "cloud" and b.case == 4
    assert net.vfg.counters["no_target"] == 1
    assert not net.metrics.finished_instances


def test_idle_departure_erases_entry():
    cfg = quiet_config(fog_initial_vehicles=3, fog_stay_min_s=1.0, fog_stay_max_s=2.0)
    net = Network(cfg, generate=False)
    net.finish()
    assert len(net.vfg.rat) == 0
    assert net.metrics.counters["vehicles_left"] == 3
    assert net.vfg.counters["handovers"] == 0


def test_full_lot_turns_vehicles_away():
    cfg = quiet_config(fog_initial_vehicles=4, fog_slots=2, fog_initial_elapsed=False)
    net = Network(cfg, generate=False)
    net.run(S)
    assert len(net.vfg.rat) == 2 and net.vfg.counters["lot_full"] == 2
    net.finish()
