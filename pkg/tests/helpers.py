"""Request builders shared by the role tests."""

from __future__ import annotations

from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf
from sidecar.crypto.groupsig import gsign
from sidecar.evaluator import EvalRequest, eval_hreq
from sidecar.msgstore import RetrieveRequest, StoreRequest, publish_hreq, retrieve_hreq
from sidecar.billing import context_digest
from sidecar.registry import set_digest_bytes


def eval_request(provider, nodes, tok, data=b"cdt", i_k=0, x=None, sigma=None):
    st = voprf.blind(data)
    xb = pc.g1_to_bytes(st.x) if x is None else x
    s_ev = set_digest_bytes(nodes)
    hreq = eval_hreq(xb, i_k, tok.t0, tok.t1_bytes, s_ev)
    sig = gsign(provider.gsk, hreq) if sigma is None else sigma
    return EvalRequest(i_k, xb, tok.t0, tok.t1_bytes, s_ev, sig), st


def store_request(provider, nodes, tok, idx=None, c0=b"\x01" * 32, c1=b"ct" * 20):
    idx = idx or pc.h_digest(b"record", c1)
    s_ms = set_digest_bytes(nodes)
    bb = context_digest(tok.t0, tok.t1_bytes, s_ms)
    return StoreRequest(idx, c0, c1, tok.t0, tok.t1_bytes, s_ms,
                        gsign(provider.gsk, publish_hreq(idx, c0, c1, bb)))


def retrieve_request(provider, nodes, tok, idx):
    s_ms = set_digest_bytes(nodes)
    ctx = context_digest(tok.t0, tok.t1_bytes, s_ms)
    return RetrieveRequest(idx, tok.t0, tok.t1_bytes, s_ms, gsign(provider.gsk, retrieve_hreq(idx, ctx)))


# one (criterion, verdict, detail) tuple per acceptance check, printed in the terminal summary
ACCEPTANCE: list[tuple[str, str, str]] = []


def verdict(criterion: str, ok: bool, detail: str) -> None:
    tag = "PASS" if ok else "FAIL"
    ACCEPTANCE.append((criterion, tag, detail))
    print(f"{tag} criterion {criterion}: {detail}", flush=True)
    assert ok, f"criterion {criterion}: {detail}"
