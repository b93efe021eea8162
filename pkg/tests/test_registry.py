import hashlib
import math
import random

import pytest
from hypothesis import given, strategies as st

from sidecar.registry import (
    NodeRecord,
    NodeType,
    Registry,
    RegistryError,
    compute_nid,
    log2_bound,
    select_closest,
    set_digest_bytes,
)


def make_registry(n: int, seed: int = 0, ntyp: NodeType = NodeType.MS) -> Registry:
    rng = random.Random(seed)
    reg = Registry()
    for j in range(n):
        reg.register_node(f"node{j}.example:8443", ntyp, rng.randbytes(32))
    return reg


def oracle(x: bytes, records, q: int):
    hx = int.from_bytes(hashlib.sha256(x).digest(), "big")

    def key(r):
        hn = int.from_bytes(hashlib.sha256(r.nid).digest(), "big")
        return (hx ^ hn, r.nid)
    return sorted(records, key=key)[:q]


def test_nid_derivation():
    ipk = bytes(range(32))
    expect = hashlib.sha256(b"ev1.example:8443" + b"EV" + ipk).digest()
    assert compute_nid("ev1.example:8443", NodeType.EV, ipk) == expect
    assert compute_nid("ev1.example:8443", NodeType.MS, ipk) != expect


def test_matches_sort_oracle_many_inputs():
    reg = make_registry(50, seed=1)
    rng = random.Random(2)
    recs = reg.nodes(NodeType.MS)
    for _ in range(2000):
        x = rng.randbytes(32)
        q = rng.randint(1, 10)
        assert reg.get_nodes(x, q, NodeType.MS) == oracle(x, recs, q)


@given(st.binary(min_size=1, max_size=40), st.integers(1, 12), st.integers(1, 30))
def test_selection_properties(x, q, size):
    reg = make_registry(size, seed=size)
    out = reg.get_ms(x, q)
    assert len(out) == min(q, size)
    assert len({r.nid for r in out}) == len(out)
    assert out == reg.get_ms(x, q)  # deterministic
    # prefix-stable: the q-1 closest are a prefix of the q closest
    assert reg.get_ms(x, max(1, q - 1)) == out[:max(1, q - 1)]


def test_q_larger_than_registry_and_empty():
    reg = make_registry(3)
    assert len(reg.get_ms(b"x", 10)) == 3
    assert Registry().get_ms(b"x", 3) == []
    with pytest.raises(ValueError):
        reg.get_ms(b"x", 0)


def test_types_are_separate():
    reg = make_registry(5, ntyp=NodeType.EV)
    reg.register_node("ms.example:1", NodeType.MS, b"k" * 32)
    assert all(r.ntyp == NodeType.EV for r in reg.get_ev(b"x", 10))
    assert len(reg.get_ms(b"x", 10)) == 1


def test_comparison_count_bound():
    for n in (16, 128, 1024):
        reg = make_registry(n, seed=n)
        stats: dict = {}
        reg.get_nodes(b"target", 3, NodeType.MS, stats)
        assert stats["comparisons"] <= log2_bound(n, 3)
        assert stats["comparisons"] <= 4 * n * math.log2(3)


def test_duplicate_and_revoke():
    reg = Registry()
    rec = reg.register_node("a:1", NodeType.EV, b"k" * 32)
    with pytest.raises(RegistryError):
        reg.register_node("a:1", NodeType.EV, b"k" * 32)
    v = reg.version
    reg.revoke_node(rec.nid)
    assert reg.version == v + 1 and reg.lookup(rec.nid) is None
    assert reg.get_ev(b"x", 3) == []
    with pytest.raises(RegistryError):
        reg.revoke_node(rec.nid)


def test_snapshot_roundtrip_and_staleness():
    reg = make_registry(8)
    snap = reg.export_snapshot()
    copy = Registry.from_snapshot(snap)
    assert copy.to_json() == reg.to_json()
    assert copy.get_ms(b"q", 3) == reg.get_ms(b"q", 3)
    reg.register_node("late:1", NodeType.MS, b"z" * 32)
    assert copy.import_snapshot(reg.export_snapshot())
    assert not copy.import_snapshot(snap)  # older version ignored
    assert len(copy) == 9


def test_snapshot_rejects_forged_nid():
    m = NodeRecord.create("a:1", NodeType.EV, b"k" * 32).to_map()
    m["nip"] = "b:1"
    with pytest.raises(RegistryError):
        NodeRecord.from_map(m)


def test_set_digest_is_order_independent():
    recs = make_registry(4).nodes()
    assert set_digest_bytes(recs) == set_digest_bytes(reversed(recs))
    assert set_digest_bytes(recs) == b"".join(sorted(r.nid for r in recs))


def test_select_closest_without_registry():
    reg = make_registry(10)
    recs = list(reg.nodes())
    assert select_closest(b"x", recs, 3) == oracle(b"x", recs, 3)


@given(st.binary(min_size=1, max_size=40), st.integers(1, 12), st.sampled_from(list(NodeType)))
def test_independent_copies_select_identically(x, q, ntyp):
    rng = random.Random(21)
    entries = [(f"n{j}.example:8443", t, rng.randbytes(32)) for j in range(14) for t in NodeType]
    a, b = Registry(), Registry()
    for e in entries:
        a.register_node(*e)
    for e in reversed(entries):
        b.register_node(*e)
    assert [r.nid for r in a.get_nodes(x, q, ntyp)] == [r.nid for r in b.get_nodes(x, q, ntyp)]
