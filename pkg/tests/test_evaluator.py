import pytest
from hypothesis import given, strategies as st

from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf
from sidecar.crypto.sig import verify_sig
from sidecar.evaluator import (
    EvalError,
    KeySchedule,
    decode_outputs,
    encode_outputs,
    response_message,
)
from tests.helpers import eval_request


@pytest.fixture
def env(small_dep):
    p = small_dep.new_provider("carrier-e", tokens=8)
    ev = next(iter(small_dep.evs.values()))
    return small_dep, p, ev


def test_honest_evaluation(env):
    dep, p, ev = env
    tok = p.wallet.for_call(b"c1")
    req, st_ = eval_request(p, [ev.nid], tok, i_k=5)
    res = ev.evaluate(req)
    assert len(res.Y) == 1
    y, pkb = res.Y[0]
    assert pkb == pc.g2_to_bytes(ev.schedule.K[5].pk)
    v = voprf.unblind(pc.g1_from_bytes(y), st_)
    assert voprf.verify_output(ev.schedule.K[5].pk, b"cdt", v)
    assert verify_sig(ev.isk.public, response_message(res.Y, req.hreq), res.sigma)
    fb = dep.als.feedback(["cidgen"])
    assert fb[-1].outcome == "ok" and fb[-1].node == ev.nid


@pytest.mark.parametrize("case,code", [
    ("not-member", "not-a-recipient"),
    ("bad-sig", "bad-signature"),
    ("bad-x", "bad-request"),
    ("bad-index", "bad-request"),
    ("bad-token", "bad-token"),
])
def test_rejections(env, case, code):
    dep, p, ev = env
    tok = p.wallet.for_call(case.encode())
    nodes = [ev.nid]
    kw = {}
    if case == "not-member":
        nodes = [n for n in dep.evs if n != ev.nid][:2]
    elif case == "bad-sig":
        kw["sigma"] = b"\x00" * 336
    elif case == "bad-x":
        kw["x"] = b"\xff" * 48
    elif case == "bad-index":
        kw["i_k"] = ev.schedule.S
    elif case == "bad-token":
        tok = type(tok)(pc.h_digest(b"forged"), tok.t1, tok.cycle_id)
    req, _ = eval_request(p, nodes, tok, **kw)
    with pytest.raises(EvalError) as ei:
        ev.evaluate(req)
    assert ei.value.code == code
    assert len(ev.ledger) == 0


def test_feedback_only_after_signature_check(env):
    dep, p, ev = env
    before = len(dep.als.lists["cidgen"])
    req, _ = eval_request(p, [ev.nid], p.wallet.for_call(b"x"), sigma=b"\x00" * 336)
    with pytest.raises(EvalError):
        ev.evaluate(req)
    assert len(dep.als.lists["cidgen"]) == before


def test_every_post_signature_outcome_logged_once(env):
    dep, p, ev = env
    before = len(dep.als.lists["cidgen"])
    expect = []
    for j in range(3):
        ev.evaluate(eval_request(p, [ev.nid], p.wallet.for_call(b"ok%d" % j))[0])
        expect.append("ok")
    with pytest.raises(EvalError):
        ev.evaluate(eval_request(p, [ev.nid], p.wallet.for_call(b"bx"), x=b"\xff" * 48)[0])
    expect.append("bad-request")
    tok = p.wallet.for_call(b"bt")
    with pytest.raises(EvalError):
        ev.evaluate(eval_request(p, [ev.nid], type(tok)(pc.h_digest(b"f"), tok.t1, tok.cycle_id))[0])
    expect.append("bad-token")
    got = [e.outcome for e in dep.als.feedback(["cidgen"])[before:]]
    assert got == expect


def test_token_single_use_per_node(env):
    dep, p, ev = env
    tok = p.wallet.for_call(b"once")
    ev.evaluate(eval_request(p, [ev.nid], tok)[0])
    with pytest.raises(EvalError) as ei:
        ev.evaluate(eval_request(p, [ev.nid], tok, data=b"other")[0])
    assert ei.value.code == "token-spent"


def test_rotation_cursor_and_grace_window(rng):
    ks = KeySchedule(0.0, S=4, t_rot=60, eps_t=5, rng=rng)
    old = list(ks.K)
    assert not ks.due(59.9) and ks.due(60.0)
    i, fresh = ks.rotate(60.0)
    assert i == 0 and ks.cursor == 1 and ks.K[0] is fresh and ks.k_exp is old[0]
    assert ks.keys_for(0, 62.0) == [fresh, old[0]]
    assert ks.keys_for(1, 62.0) == [old[1]]
    assert ks.keys_for(0, 65.0) == [fresh]  # window closed
    assert not ks.purge(64.9) and ks.purge(65.0)
    assert ks.k_exp is None and old[0] not in ks.held_keys()
    for _ in range(4):
        ks.rotate(100.0)
    assert ks.cursor == 1 and not set(map(id, ks.held_keys())) & set(map(id, old))


def test_edge_case_response_has_two_pairs(env):
    dep, p, ev = env
    ev.clock.advance(ev.schedule.t_rot)
    entry = ev.rotate()
    req, st_ = eval_request(p, [ev.nid], p.wallet.for_call(b"edge"), i_k=entry.i)
    res = ev.evaluate(req)
    assert len(res.Y) == 2 and res.Y[0][1] == entry.pk


def test_tick_rotates_and_logs(env):
    dep, p, ev = env
    n = len(dep.als.lists["rotation"])
    assert ev.tick() == []
    ev.clock.advance(60)
    out = ev.tick()
    assert len(out) == 1 and len(dep.als.lists["rotation"]) == n + 1
    e = out[0]
    assert verify_sig(ev.isk.public, e.message(), e.sig)
    assert dep.als.pk_at(ev.nid, e.i, e.ts) == e.pk


@given(st.lists(st.tuples(st.binary(min_size=48, max_size=48), st.binary(min_size=96, max_size=96)),
                max_size=3))
def test_output_encoding_roundtrip(Y):
    assert decode_outputs(encode_outputs(Y)) == Y


def test_output_decoding_rejects_truncation():
    with pytest.raises(pc.DecodeError):
        decode_outputs(b"")
    with pytest.raises(pc.DecodeError):
        decode_outputs(b"\x01" + b"\x00" * 10)


def _skewed_deployment():
    from sidecar.sim.deploy import DeployConfig, Deployment

    dep = Deployment(DeployConfig(N=3, M=4, n=3, m=3, skew={0: 30.0, 1: -30.0, 2: 12.0}), seed=3)
    for j, ev in enumerate(dep.evs.values()):
        ev.schedule.t_exp -= 17.0 * j  # independent rotation phases
    return dep, dep.new_provider("carrier-skew", tokens=64)


def test_unsynchronized_clocks_still_retrieve():
    import random

    dep, p = _skewed_deployment()
    rng = random.Random(9)
    for k in range(40):
        src, dst = f"+1555{rng.randrange(10**7):07d}", f"+1444{rng.randrange(10**7):07d}"
        p.publish(src, dst, b"payload %d" % k)
        dep.advance(rng.uniform(0.5, 4.0), step=0.5)
        assert p.retrieve(src, dst) == b"payload %d" % k
        dep.advance(rng.uniform(20.0, 70.0), step=1.0)


def test_rotation_between_publish_and_retrieve_uses_grace_key():
    dep, p = _skewed_deployment()
    ev = next(iter(dep.evs.values()))
    dep.advance(ev.schedule.t_exp + ev.schedule.t_rot - ev.clock.now() - 1.0, step=0.5)
    slot = ev.schedule.cursor
    dst = next(d for d in (f"+1444{j:07d}" for j in range(10**4))
               if p.derive_cdt("+15550001", d).i_k == slot)
    p.publish("+15550001", dst, b"edge")
    dep.advance(3.0, step=0.5)
    assert ev.schedule.cursor == (slot + 1) % ev.schedule.S
    assert p.retrieve("+15550001", dst) == b"edge"
    assert len(p.last_candidates) >= 2
