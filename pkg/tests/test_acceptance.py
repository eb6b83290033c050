"""Acceptance criteria, one test each.

Every test appends a ``CRITERION n: PASS|FAIL ...`` line that is printed in
the terminal summary, so a plain ``pytest -v`` run shows the whole scorecard.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, park_consumer, quiet_config

from foggyedge.access import AccessStore, HmmRecord, apply_batch, batch_max_time, sync_step
from foggyedge.compute import NodeResources, exec_ticks
from foggyedge.config import MODES, ScenarioConfig
from foggyedge.harness import run_scenario
from foggyedge.naming import FeName, MalformedName, parse_name, serialize_name
from foggyedge.network import CONSUMER_FACE, Network, read_trace
from foggyedge.packet import ComputedResult, Data, Interest, MicroserviceCode, wire_size


def report(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# -- criteria 1 to 3: the default sweep ---------------------------------------------

SWEEP_RATES = (1, 2, 5, 6, 7, 8, 9, 10)


@pytest.fixture(scope="module")
def default_sweep():
    cfg = ScenarioConfig(output_trace=False)
    cells = {}
    for rate in SWEEP_RATES:
        for mode in MODES:
            t0 = time.perf_counter()
            rep = run_scenario(cfg.replace(scenario_mode=mode), rate)
            cells[(rate, mode)] = (rep, time.perf_counter() - t0)
    return cells


def test_criterion_1_low_rate_equivalence(default_sweep):
    parts, ok = [], True
    for rate in (1, 2):
        fe = default_sweep[(rate, "FoggyEdge")][0].stats["mean"]
        eo = default_sweep[(rate, "EdgeOnly")][0].stats["mean"]
        diff = abs(fe - eo) / eo
        slowest = max(default_sweep[(rate, m)][1] for m in MODES)
        ok &= diff <= 0.05 and slowest < 10.0
        parts.append(f"rate {rate}: |FE-EO|/EO={diff:.2%} slowest cell {slowest:.2f}s")
    report(1, ok, "low-rate equivalence (<=5%, <10s/cell); " + "; ".join(parts))
    assert ok


def test_criterion_2_saturation_ordering(default_sweep):
    parts, ok = [], True
    for rate in SWEEP_RATES[2:]:
        fe, eo, co = (default_sweep[(rate, m)][0].stats["mean"] for m in MODES)
        g1, g2 = 1 - fe / eo, 1 - eo / co
        ok &= g1 >= 0.05 and g2 >= 0.05
        parts.append(f"{rate}:{g1:.1%}/{g2:.1%}")
    report(2, ok, "FE<EO<CO with gaps >=5% at rates 5..10 (FE-gap/EO-gap) " + " ".join(parts))
    assert ok


def test_criterion_3_case1_dominance(default_sweep):
    rep = default_sweep[(1, "FoggyEdge")][0]
    sat = [r for r in rep.records if r.satisfied_at is not None and r.created_at >= rep.cfg.warmup_ticks]
    share = sum(r.case == 1 for r in sat) / len(sat)
    ok = share >= 0.95
    report(3, ok, f"Case 1 share at rate 1 = {share:.1%} of {len(sat)} satisfied (>=95%)")
    assert ok


# -- criterion 4: one request on an idle network ---------------------------------------

def _oracle(net: Network, service: str, node: str, con) -> int:
    """CSD from the link model alone, built from the packets we expect on each hop."""
    spec = net.catalog[service]
    name = FeName(*net.region, service, (con.node_id, "1"))
    rights = "0" * 64 if spec.protected else None  # digest length is all that matters
    i = wire_size(Interest(name, 0, access_rights=rights))
    d = wire_size(Data(name, ComputedResult(node)))
    adhoc, edge, cloud = net.adhoc_link, net.edge_link, net.cloud_link
    if node == "cloud":
        run = exec_ticks(spec.base_ticks, net.cfg.cloud_speed_factor)
        return (adhoc.delay_ticks(i) + edge.delay_ticks(i) + cloud.delay_ticks(i) + run
                + cloud.delay_ticks(d) + edge.delay_ticks(d) + adhoc.delay_ticks(d))
    run = exec_ticks(spec.base_ticks, net.cfg.edge_speed_factor)
    return adhoc.delay_ticks(i) + run + adhoc.delay_ticks(d)


def test_criterion_4_single_request_oracle():
    misses, checked = [], 0
    for mode in MODES:
        for service in sorted(ScenarioConfig().catalog()):
            net = Network(quiet_config(scenario_mode=mode), generate=False)
            con = park_consumer(net, 0, 1)
            net.inject(con, service)
            net.finish()
            rec = net.metrics.list()[0]
            node = "cloud" if mode == "CloudOnly" else "edge1"
            want = _oracle(net, service, node, con)
            checked += 1
            if rec.csd != want or rec.node != node:
                misses.append(f"{mode}/{service}: got {rec.csd} at {rec.node}, want {want}")
    ok = not misses
    report(4, ok, f"{checked} mode x service single-request CSDs equal the hand sum exactly"
               + ("" if ok else "; " + "; ".join(misses)))
    assert ok


# -- criterion 5: PIT aggregation at one edge --------------------------------------------

def test_criterion_5_pit_aggregation():
    bad = []
    for k in range(2, 9):
        net = Network(quiet_config(scenario_mode="CloudOnly"), generate=False)
        name = FeName(*net.region, "object_detection", ("shared",))
        key = serialize_name(name)
        group = [park_consumer(net, c, 1) for c in range(k)]
        for c in group:
            i = Interest(name, net.nonce())
            c.pending[key] = (i, "edge1", 0)
            net.send(c, CONSUMER_FACE, i, dst="edge1")
        net.run()
        up = [h for h in net.hops if h.kind == "Interest" and h.sender == "edge1"]
        got = {c.node_id: sum(1 for h in net.hops if h.kind == "Data" and h.receiver == c.node_id
                              and h.name == key) for c in group}
        if len(up) != 1 or sorted(got.values()) != [1] * k or any(c.pending for c in group):
            bad.append(f"K={k}: {len(up)} upstream, deliveries {got}")
    ok = not bad
    report(5, ok, "K=2..8 same-name requests -> 1 upstream Interest, K deliveries"
               + ("" if ok else "; " + "; ".join(bad)))
    assert ok


# -- criterion 6: R-PIT path --------------------------------------------------------------

def test_criterion_6_rpit_path_equality():
    net = Network(quiet_config(scenario_mode="EdgeOnly"), generate=False)
    svc = "object_detection"
    net.edges[0].executor.resources = NodeResources(100)  # edge0 must offload
    net.edges[1].code.discard(svc)  # and edge1 must fetch the code
    park_consumer(net, 0, 0)
    net.inject("car0", svc)
    net.finish()
    sends = [r for r in read_trace(bytes(net.trace)) if r["type"] == "send"
             and r["packet"].name.microservice == svc and r["receiver"] in ("edge0", "edge1", "bridge")]

    def path(pred):
        hops = [(r["sender"], r["receiver"]) for r in sends if pred(r["packet"])]
        return [hops[0][0]] + [b for _, b in hops] if hops else []

    interest = path(lambda p: isinstance(p, Interest) and p.offloading)
    ack = path(lambda p: isinstance(p, Data) and p.microservice_fetch)
    code = path(lambda p: isinstance(p, Data) and isinstance(p.payload, MicroserviceCode)
                and not p.microservice_fetch)
    rec = net.metrics.list()[0]
    ok = (interest == ["edge0", "bridge", "edge1"] and ack == interest[::-1] and code == ack[::-1]
          and rec.case == 2 and rec.satisfied_at is not None)
    report(6, ok, f"offload {'>'.join(interest)}; fetch ack {'>'.join(ack)}; code {'>'.join(code)}")
    assert ok


# -- criterion 7: access-store sync ---------------------------------------------------------

def _random_cloud(rng, n):
    cloud, t = AccessStore(), 0
    for k in range(n):
        t += int(rng.integers(0, 3))  # zero steps make equal-time groups
        cloud.register(HmmRecord(f"{k:064x}", "FE:/Korea/Seoul/Itaewon|svc", t))
    return cloud


def test_criterion_7_hmm_sync_convergence():
    rng = np.random.default_rng(7)
    fails, worst_two_round = [], 0
    for trial in range(200):
        n = int(rng.integers(0, 120))
        cloud = _random_cloud(rng, n)
        recs = sorted(cloud.records.values(), key=lambda r: r.created_at)
        # edge starts from some earlier sync point
        cut = int(rng.integers(0, n + 1))
        edge = AccessStore()
        if cut:
            apply_batch(edge, recs[:cut], recs[cut - 1].created_at)
            # a timestamp group is only fully synced when the next record is newer
            while cut < n and recs[cut].created_at == edge.last_sync_time:
                edge.records[recs[cut].hmac] = recs[cut]
                cut += 1
        for limit in (1, 3, 64):
            e = edge.copy()
            sync_point = cloud.latest()
            rounds, more = 0, True
            while more:
                batch, more = sync_step(cloud, e.last_sync_time, limit)
                apply_batch(e, batch, batch_max_time(batch, e.last_sync_time))
                rounds += 1
                if rounds == 1:
                    late = int(rng.integers(0, 3))
                    for j in range(late):  # new registrations land between rounds
                        cloud.register(HmmRecord(f"{10**6 + trial * 10 + j + limit * 1000:064x}",
                                                 "FE:/Korea/Seoul/Itaewon|svc", cloud.latest() + 1))
                if rounds > n + 10:
                    break
            want = {h for h, r in cloud.records.items() if r.created_at <= sync_point}
            if not want <= set(e.records):
                fails.append(f"trial {trial} limit {limit}: missing records")
            newer = sum(r.created_at > edge.last_sync_time for r in recs)
            if limit == 64 and newer <= 2 * limit:
                worst_two_round = max(worst_two_round, rounds)
                if rounds > 2:
                    fails.append(f"trial {trial}: {rounds} rounds with ample batch")
            # drop the late records again so the next batch limit starts from the same cloud
            for h in [h for h, r in cloud.records.items() if r.created_at > sync_point]:
                del cloud.records[h]
    ok = not fails
    report(7, ok, f"200 store pairs x batch {{1,3,64}} converge; max rounds with ample batch = "
               f"{worst_two_round} (<=2)" + ("" if ok else "; " + "; ".join(fails[:5])))
    assert ok


# -- criterion 8: conservation with handovers -------------------------------------------------

CHURN = dict(scenario_duration_s=60.0, output_trace=False, fog_stay_min_s=5.0, fog_stay_max_s=60.0,
             fog_arrival_rate=0.3, fog_initial_vehicles=6, fog_vehicle_resources=600)


def test_criterion_8_conservation():
    violations, handovers, moved = [], 0, 0
    for seed in range(20):
        cfg = ScenarioConfig(scenario_seed=seed, **CHURN)
        rep = run_scenario(cfg, rate=10, check=False)
        net = rep.network
        violations += [f"seed {seed}: {p}" for p in net.check_invariants()]
        handovers += net.vfg.counters["handovers"]
        for inst in net.metrics.finished_instances:
            moved += 1
            if inst.delivered_work() != inst.spec.base_ticks:
                violations.append(f"seed {seed}: {inst.id} work {inst.delivered_work()}")
    ok = not violations and moved > 0
    report(8, ok, f"20 seeds x 60 s: all nodes back to initial resources, {moved} handed-over "
               f"instances ({handovers} handovers) each delivered exactly base_duration"
               + ("" if ok else "; " + "; ".join(violations[:5])))
    assert ok


# -- criterion 9: determinism --------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    cfg = ScenarioConfig()
    for d in ("a", "b"):
        run_scenario(cfg, rate=10, out_dir=tmp_path / d)
    a, b = (tmp_path / "a/trace.bin").read_bytes(), (tmp_path / "b/trace.bin").read_bytes()
    ok = a == b and len(a) > 0
    report(9, ok, f"two runs -> byte-identical trace.bin ({len(a)} bytes)")
    assert ok


# -- criterion 10: name fuzzing ------------------------------------------------------------------

def _fuzz_inputs(n: int, rng: np.random.Generator):
    """Half raw random bytes, half byte-level mutations of valid names."""
    seeds = [b"FE:/Korea/Seoul/Itaewon|traffic_status?param1,param2", b"FE:/A/B/C|s",
             b"FE:/a/b/c | x ? y , z"]
    alphabet = np.frombuffer(b"FE:/|?, \t\x00\xff\xc3\xa9Aa0_-.", dtype=np.uint8)
    raw_lens = rng.integers(0, 48, n // 2)
    blob = rng.integers(0, 256, int(raw_lens.sum()), dtype=np.uint8).tobytes()
    pos = 0
    for ln in raw_lens:
        yield blob[pos:pos + ln]
        pos += ln
    picks = rng.integers(0, len(seeds), n - n // 2)
    ops = rng.integers(0, 3, (n - n // 2, 3))
    where = rng.random((n - n // 2, 3))
    chars = alphabet[rng.integers(0, len(alphabet), (n - n // 2, 3))]
    for k in range(n - n // 2):
        s = bytearray(seeds[picks[k]])
        for op, w, c in zip(ops[k], where[k], chars[k]):
            at = int(w * len(s)) if s else 0
            if op == 0:
                s.insert(at, int(c))
            elif op == 1 and s:
                del s[min(at, len(s) - 1)]
            elif s:
                s[min(at, len(s) - 1)] = int(c)
        yield bytes(s)


def test_criterion_10_name_fuzzing():
    rng = np.random.default_rng(10)
    n = 1_000_000
    crashes, accepted, bad_round_trip = [], 0, []
    for raw in _fuzz_inputs(n, rng):
        text = raw.decode("utf-8", errors="surrogateescape")
        try:
            name = parse_name(text)
        except MalformedName:
            continue
        except Exception as e:  # anything else is a crash
            crashes.append((raw, repr(e)))
            continue
        accepted += 1
        s = serialize_name(name)
        if parse_name(s) != name or serialize_name(parse_name(s)) != s:
            bad_round_trip.append(raw)
    ok = not crashes and not bad_round_trip and accepted > 0
    report(10, ok, f"{n:,} fuzzed inputs: {len(crashes)} crashes, {accepted:,} accepted, "
                   f"{len(bad_round_trip)} round-trip failures")
    assert ok, (crashes[:3], bad_round_trip[:3])
