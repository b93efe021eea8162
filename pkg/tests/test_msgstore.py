import pytest

from sidecar.crypto import pairing as pc
from sidecar.crypto.sig import verify_sig
from sidecar.msgstore import StoreError, ack_message, denial_message, record_hres
from tests.helpers import retrieve_request, store_request


@pytest.fixture
def env(small_dep):
    p = small_dep.new_provider("carrier-m", tokens=12)
    ms = next(iter(small_dep.mss.values()))
    return small_dep, p, ms


def test_store_then_retrieve(env):
    dep, p, ms = env
    req = store_request(p, [ms.nid], p.wallet.for_call(b"a"))
    ack = ms.store(req)
    assert verify_sig(ms.isk.public, ack_message(req.hreq, ack.ts), ack.sig)
    rreq = retrieve_request(p, [ms.nid], p.wallet.for_call(b"b"), req.idx)
    res = ms.retrieve(rreq)
    assert (res.c0, res.c1, res.bb, res.sigma) == (req.c0, req.c1, req.bb, req.sigma)
    hres = record_hres(res.idx, res.c0, res.c1, res.bb, res.sigma)
    assert verify_sig(ms.isk.public, rreq.hreq + hres, res.sig)
    kinds = [e.kind for e in dep.als.feedback(["pub", "ret"])]
    assert kinds == ["pub", "ret"]


def test_expiry_is_hard(env):
    dep, p, ms = env
    req = store_request(p, [ms.nid], p.wallet.for_call(b"a"))
    ms.store(req)
    dep.clock.advance(ms.t_max + 0.001)
    with pytest.raises(StoreError) as ei:
        ms.retrieve(retrieve_request(p, [ms.nid], p.wallet.for_call(b"b"), req.idx))
    assert ei.value.code == "not-found"
    d = ei.value.denial
    assert verify_sig(ms.isk.public, denial_message(d.hreq, d.code, d.ts), d.sig)
    assert req.idx not in ms.db


def test_within_lifetime_succeeds(env):
    dep, p, ms = env
    req = store_request(p, [ms.nid], p.wallet.for_call(b"a"))
    ms.store(req)
    dep.clock.advance(ms.t_max - 0.001)
    assert ms.retrieve(retrieve_request(p, [ms.nid], p.wallet.for_call(b"b"), req.idx)).idx == req.idx


def test_sweep_removes_expired(env):
    dep, p, ms = env
    for k in range(3):
        ms.store(store_request(p, [ms.nid], p.wallet.for_call(bytes([k])), c1=bytes([k]) * 30))
    dep.clock.advance(ms.t_max + 1)
    assert ms.expire_sweep() == 3 and not ms.db


def test_duplicate_idx_while_live(env):
    dep, p, ms = env
    idx = pc.h_digest(b"same")
    ms.store(store_request(p, [ms.nid], p.wallet.for_call(b"a"), idx=idx))
    with pytest.raises(StoreError) as ei:
        ms.store(store_request(p, [ms.nid], p.wallet.for_call(b"b"), idx=idx, c1=b"other"))
    assert ei.value.code == "duplicate-idx" and ei.value.denial is not None
    dep.clock.advance(ms.t_max + 1)
    ms.store(store_request(p, [ms.nid], p.wallet.for_call(b"c"), idx=idx, c1=b"later"))
    assert ms.db[idx].c1 == b"later"


def test_rejections(env):
    dep, p, ms = env
    others = [n for n in dep.mss if n != ms.nid][:2]
    with pytest.raises(StoreError) as ei:
        ms.store(store_request(p, others, p.wallet.for_call(b"a")))
    assert ei.value.code == "not-a-recipient"
    tok = p.wallet.for_call(b"b")
    req = store_request(p, [ms.nid], tok)
    ms.store(req)
    with pytest.raises(StoreError) as ei:
        ms.store(store_request(p, [ms.nid], tok, c1=b"again"))
    assert ei.value.code == "token-spent"
    forged = type(req)(req.idx, req.c0, req.c1, req.t0, req.t1, req.s_ms, b"\x00" * 336)
    with pytest.raises(StoreError) as ei:
        ms.store(forged)
    assert ei.value.code == "token-spent"  # spent check runs before the signature
    tok2 = p.wallet.for_call(b"c")
    bad = type(req)(req.idx, req.c0, req.c1, tok2.t0, tok2.t1_bytes, req.s_ms, b"\x00" * 336)
    with pytest.raises(StoreError) as ei:
        ms.store(bad)
    assert ei.value.code == "bad-signature"


def test_retrieve_missing_is_signed_not_found(env):
    dep, p, ms = env
    with pytest.raises(StoreError) as ei:
        ms.retrieve(retrieve_request(p, [ms.nid], p.wallet.for_call(b"a"), pc.h_digest(b"nothing")))
    assert ei.value.code == "not-found"
    assert dep.als.feedback(["ret"])[-1].outcome == "not-found"
    assert len(ms.ledger) == 0  # a miss does not consume the token


def test_store_never_keeps_plaintext_calls(env):
    dep, p, ms = env
    req = store_request(p, [ms.nid], p.wallet.for_call(b"a"))
    ms.store(req)
    rec = ms.db[req.idx]
    assert set(vars(rec)) == {"idx", "c0", "c1", "bb", "sigma", "stored_at"}


def test_replicas_hold_identical_records(small_dep):
    p = small_dep.new_provider("carrier-rep", tokens=8)
    res = p.publish("+15550001", "+15550002", b"replicated")
    held = [ms.db[res.idx] for ms in small_dep.mss.values() if res.idx in ms.db]
    assert len(held) == 3
    assert len({(r.idx, r.c0, r.c1, r.bb, r.sigma) for r in held}) == 1
