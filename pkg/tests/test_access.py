import numpy as np
import pytest

from foggyedge.access import (VIN_ALPHABET, AccessStore, HmmRecord, InvalidVin,
                              MissingAccessRights, apply_batch, batch_max_time, compute_hmac,
                              load_bootstrap, sync_step, verify, write_bootstrap)
from foggyedge.naming import FeName, parse_name
from foggyedge.packet import Interest

TRAFFIC = "FE:/Korea/Seoul/Itaewon|traffic_status"
VIN = "1HGBH41JXMN109186"
# HMAC-SHA-256, key = VIN bytes, message = canonical name bytes; cross-checked with openssl
GOLDEN = "4b4b08f721394913d867f5e8ab9e79e0a5634b7734c45689a98399e9cbdd698b"


def vins(rng, n):
    return ["".join(VIN_ALPHABET[k] for k in rng.integers(0, len(VIN_ALPHABET), 17))
            for _ in range(n)]


def test_golden_vector():
    assert compute_hmac(TRAFFIC, VIN) == GOLDEN


def test_params_are_ignored():
    assert compute_hmac(TRAFFIC + "?a,b", VIN) == GOLDEN


def test_deterministic_and_vin_sensitive():
    rng = np.random.default_rng(0)
    a, b = vins(rng, 1000), vins(rng, 1000)
    for v1, v2 in zip(a, b):
        if v1 != v2:
            assert compute_hmac(TRAFFIC, v1) != compute_hmac(TRAFFIC, v2)
    assert compute_hmac(TRAFFIC, a[0]) == compute_hmac(TRAFFIC, a[0])


@pytest.mark.parametrize("vin", ["", "1HGBH41JXMN10918", "1HGBH41JXMN1091867", "IHGBH41JXMN109186",
                                 "1hgbh41jxmn109186", "OHGBH41JXMN109186", "QHGBH41JXMN109186"])
def test_invalid_vin(vin):
    with pytest.raises(InvalidVin):
        compute_hmac(TRAFFIC, vin)


def _store():
    s = AccessStore()
    s.register(HmmRecord(GOLDEN, TRAFFIC, 1))
    return s


def test_verify():
    s = _store()
    name = parse_name(TRAFFIC + "?x")
    assert verify(s, Interest(name, 0, access_rights=GOLDEN))
    other = FeName("Korea", "Seoul", "Itaewon", "parking_finder")
    assert not verify(s, Interest(other, 0, access_rights=GOLDEN))
    assert not verify(s, Interest(name, 0, access_rights="00" * 32))


def test_verify_missing_rights():
    s = _store()
    name = parse_name(TRAFFIC)
    with pytest.raises(MissingAccessRights):
        verify(s, Interest(name, 0))
    assert verify(s, Interest(name, 0), protected=False)


def _cloud(times):
    c = AccessStore()
    for k, t in enumerate(times):
        c.register(HmmRecord(f"{k:064x}", TRAFFIC, t))
    return c


def test_sync_small_batch():
    c = _cloud([1, 2, 3])
    batch, more = sync_step(c, 0, 10)
    assert len(batch) == 3 and not more


def test_sync_two_rounds():
    c = _cloud(range(1, 16))
    edge = AccessStore()
    batch, more = sync_step(c, edge.last_sync_time, 10)
    assert len(batch) == 10 and more
    apply_batch(edge, batch, batch_max_time(batch, edge.last_sync_time))
    batch, more = sync_step(c, edge.last_sync_time, 10)
    assert len(batch) == 5 and not more
    apply_batch(edge, batch, batch_max_time(batch, edge.last_sync_time))
    assert edge.records == c.records


def test_sync_already_current():
    c = _cloud([1, 2, 3])
    assert sync_step(c, 3, 10) == ([], False)


def test_sync_never_splits_a_timestamp_group():
    c = _cloud([1, 2, 2, 2, 3])
    batch, more = sync_step(c, 0, 2)
    assert [r.created_at for r in batch] == [1] and more
    batch, more = sync_step(c, 1, 2)
    assert [r.created_at for r in batch] == [2, 2, 2] and more


def test_register_rejects_time_travel_and_duplicates():
    c = _cloud([5])
    with pytest.raises(ValueError):
        c.register(HmmRecord("ff" * 32, TRAFFIC, 4))
    with pytest.raises(ValueError):
        c.register(HmmRecord(f"{0:064x}", TRAFFIC, 6))


def test_apply_batch_empty_and_idempotent():
    edge = AccessStore()
    apply_batch(edge, [], 7)
    assert edge.last_sync_time == 7 and not edge.records
    c = _cloud([8, 9])
    batch, _ = sync_step(c, 7, 10)
    once = apply_batch(edge.copy(), batch, 9)
    twice = apply_batch(apply_batch(edge.copy(), batch, 9), batch, 9)
    assert once == twice


def test_bootstrap_round_trip(tmp_path):
    c = _cloud([1, 2, 2])
    p = tmp_path / "hmm.txt"
    write_bootstrap(p, c)
    assert load_bootstrap(p).records == c.records


def test_bootstrap_rejects_bad_lines(tmp_path):
    p = tmp_path / "hmm.txt"
    p.write_text("nothex " + TRAFFIC + " 1\n")
    with pytest.raises(ValueError):
        load_bootstrap(p)


def test_cold_store_fetches_records_stamped_at_zero():
    cloud = AccessStore()
    cloud.register(HmmRecord("a" * 64, "FE:/A/B/C|s", 0))
    edge = AccessStore()
    batch, more = sync_step(cloud, edge.last_sync_time)
    apply_batch(edge, batch, batch_max_time(batch, edge.last_sync_time))
    assert set(edge.records) == {"a" * 64} and not more
