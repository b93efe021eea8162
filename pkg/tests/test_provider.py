import hashlib

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from sidecar.crypto import pairing as pc
from sidecar.net.transport import TransportError
from sidecar.provider import (
    PUBLISH,
    RETRIEVE,
    InsufficientEvaluations,
    RecordNotFound,
    compute_cdt,
    key_index,
    quantize_ts,
)
from sidecar.sim.faults import WrongKeyEV


@pytest.fixture
def pair(small_dep):
    return small_dep, small_dep.new_provider("alpha"), small_dep.new_provider("beta")


def test_cdt_layout():
    expect = hashlib.sha256(b"\x00\x02ab" + b"\x00\x03xyz" + (7).to_bytes(8, "big")).digest()
    assert compute_cdt("ab", "xyz", 7) == expect
    assert compute_cdt("a", "bxyz", 7) != compute_cdt("ab", "xyz", 7)
    assert quantize_ts(119.99) == 1 and quantize_ts(120.0) == 2
    assert key_index(b"\x00" * 31 + b"\x45", 64) == 5


def test_call_secret_matches_direct_computation(pair):
    dep, a, b = pair
    call = a.derive_cdt("+15550000001", "+15550000002")
    csk = a.gen_call_secret(PUBLISH, call)
    h = pc.h_to_group(call.cdt)
    u = pc.g1_identity()
    for rec in call.s_ev:
        u = u + h * dep.evs[rec.nid].schedule.K[call.i_k].sk
    assert csk == hashlib.sha256(pc.g1_to_bytes(u)).digest()
    call_b = b.derive_cdt("+15550000001", "+15550000002")
    assert b.gen_call_secret(RETRIEVE, call_b) == [csk]


def test_publish_retrieve_roundtrip(pair):
    dep, a, b = pair
    res = a.publish("+15551112222", "+15553334444", b"passport")
    assert len(res.acks) == 3
    dep.advance(1.0)
    assert b.retrieve("+15551112222", "+15553334444") == b"passport"


def test_retrieve_falls_back_to_previous_minute(pair):
    dep, a, b = pair
    now = dep.clock.now()
    dep.clock.set((now // 60) * 60 + 59.5)
    a.publish("+1", "+2", b"edge-of-minute")
    dep.advance(1.0)
    assert b.retrieve("+1", "+2") == b"edge-of-minute"
    with pytest.raises(RecordNotFound):
        b.retrieve("+1", "+2", fallback=False)


def test_unknown_call_not_found(pair):
    dep, a, b = pair
    with pytest.raises(RecordNotFound):
        b.retrieve("+1", "+999")


def test_edge_case_gives_two_candidates(pair):
    dep, a, b = pair
    call = a.derive_cdt("+1", "+3")
    a.publish("+1", "+3", b"rot")
    ev = dep.evs[call.s_ev[0].nid]
    target = call.i_k
    while ev.schedule.cursor != target:
        ev.schedule.rotate(dep.clock.now() - 100)
    dep.clock.advance(0.5)
    ev.rotate()
    assert b.retrieve("+1", "+3") == b"rot"
    assert len(b.last_candidates) == 2


def test_wrong_key_ev_is_detected_and_reported(pair):
    dep, a, b = pair
    call = a.derive_cdt("+1", "+4")
    bad = call.s_ev[1].nid
    dep.replace_handler(bad, WrongKeyEV(dep.evs[bad]))
    with pytest.raises(InsufficientEvaluations):
        a.publish("+1", "+4", b"x")
    assert [r.target for r in a.reports] == [bad]
    assert a.reports[0].kind == "cidcomp"


class Flaky:
    def __init__(self, inner, failures):
        self.inner, self.failures = inner, failures

    def evaluate(self, req):
        if self.failures:
            self.failures -= 1
            raise TransportError("timeout")
        return self.inner.evaluate(req)


def test_transport_error_retries_with_fresh_token(pair):
    dep, a, b = pair
    call = a.derive_cdt("+1", "+5")
    nid = call.s_ev[0].nid
    dep.replace_handler(nid, Flaky(dep.evs[nid], 1))
    first = a.wallet.for_call(call.cdt)
    spent = []
    a.report_sink = None
    orig = a._gen_once
    a._gen_once = lambda mode, c, tok: spent.append(tok.t0) or orig(mode, c, tok)
    a.publish("+1", "+5", b"retry")
    assert spent[0] == first.t0 and len(spent) == 2 and spent[1] != first.t0
    call2 = a.derive_cdt("+1", "+6")
    nid2 = call2.s_ev[0].nid
    dep.replace_handler(nid2, Flaky(dep.evs[nid2], 5))
    with pytest.raises(InsufficientEvaluations):
        a.publish("+1", "+6", b"down")
    assert len(spent) == 4  # one retry, then give up


def test_token_bound_per_call(pair):
    dep, a, _ = pair
    t1 = a.wallet.for_call(b"c1")
    assert a.wallet.for_call(b"c1") is t1
    assert a.wallet.for_call(b"c2") is not t1
    a.wallet.release(b"c1")
    assert a.wallet.for_call(b"c1") is not t1


def test_same_call_can_be_retrieved_twice(pair):
    dep, a, b = pair
    a.publish("+1", "+9", b"twice")
    assert b.retrieve("+1", "+9") == b"twice"
    assert b.retrieve("+1", "+9") == b"twice"


def test_revoked_provider_is_refused(pair):
    dep, a, b = pair
    dep.revoke_provider("alpha")
    with pytest.raises(InsufficientEvaluations):
        a.publish("+1", "+7", b"x")
    b.publish("+1", "+8", b"still fine")
    assert b.retrieve("+1", "+8") == b"still fine"


_tn = st.from_regex(r"\+1[2-9][0-9]{9}", fullmatch=True)


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(src=_tn, dst=_tn)
def test_publish_secret_is_in_every_retriever_set(pair, src, dst):
    dep, a, b = pair
    call = a.derive_cdt(src, dst)
    try:
        csk = a.gen_call_secret(PUBLISH, call)
    finally:
        a.wallet.release(call.cdt)
    rcall = b.derive_cdt(src, dst)
    try:
        L = b.gen_call_secret(RETRIEVE, rcall)
    finally:
        b.wallet.release(rcall.cdt)
    assert csk in L and 1 <= len(L) <= 2 ** a.n


def _rotate_slot(dep, nid, slot):
    ev = dep.evs[nid]
    while ev.schedule.cursor != slot:
        ev.rotate()
    ev.rotate()


def test_candidate_bound_and_retrieval_work(pair):
    dep, a, b = pair
    dep.net.trace = []
    a.publish("+1", "+7", b"one")
    dep.net.trace.clear()
    assert b.retrieve("+1", "+7") == b"one"
    assert len(b.last_candidates) == 1
    assert sum(t.kind == "retrieve" for t in dep.net.trace) == b.m

    call = a.derive_cdt("+1", "+8")
    a.publish("+1", "+8", b"two")
    dep.clock.advance(0.5)
    for node in call.s_ev:  # every EV rotates the slot: the worst case
        _rotate_slot(dep, node.nid, call.i_k)
    dep.net.trace.clear()
    assert b.retrieve("+1", "+8") == b"two"
    L = b.last_candidates
    assert len(L) == 2 ** a.n
    assert sum(t.kind == "retrieve" for t in dep.net.trace) <= len(L) * b.m


def test_transmitted_fields_reveal_nothing_about_call(pair, monkeypatch):
    dep, a, b = pair
    sent: dict[str, list] = {"alpha": [], "beta": []}
    orig = dep.net.request
    who = {"cur": "alpha"}

    def capture(node, kind, req):
        sent[who["cur"]].append((kind, req))
        return orig(node, kind, req)
    monkeypatch.setattr(dep.net, "request", capture)

    src, dst = "+15551230001", "+15559870002"
    a.publish(src, dst, b"secret body")
    for name, p in (("alpha", a), ("beta", b)):
        who["cur"] = name
        sent[name].clear()
        assert p.retrieve(src, dst) == b"secret body"
    cdt = a.derive_cdt(src, dst).cdt
    needles = [src.encode(), dst.encode(), b"alpha", b"beta", b"secret body", cdt]
    routing = {"i_k", "s_ev", "s_ms", "idx"}  # selectors the receiving node needs
    for name in sent:
        for _, req in sent[name]:
            for f, v in vars(req).items():
                if isinstance(v, bytes):
                    assert not any(n in v for n in needles), (name, f)
    pairs = list(zip(sent["alpha"], sent["beta"]))
    assert pairs
    for (ka, ra), (kb, rb) in pairs:
        assert ka == kb
        for f, v in vars(ra).items():
            if f not in routing:
                assert v != getattr(rb, f), f
