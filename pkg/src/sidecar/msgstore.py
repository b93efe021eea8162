"""Message store node: authenticated store and retrieve with a hard record lifetime."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

from sidecar.billing import SpentLedger, context_digest, verify_token
from sidecar.crypto import pairing as pc
from sidecar.crypto.groupsig import gverify
from sidecar.crypto.sig import NodeKey
from sidecar.evaluator import set_members, ts_ms
from sidecar.logs import KIND_PUB, KIND_RET, FeedbackEntry
from sidecar.trust import TrustAnchors

DEFAULT_T_MAX = 15.0


class StoreError(Exception):
    def __init__(self, code: str, msg: str = "", denial: "SignedDenial | None" = None) -> None:
        super().__init__(msg or code)
        self.code = code
        self.denial = denial


def publish_hreq(idx: bytes, c0: bytes, c1: bytes, bb: bytes) -> bytes:
    return pc.h_digest(idx, c0, c1) + bb


def retrieve_hreq(idx: bytes, bb: bytes) -> bytes:
    return pc.h_digest(idx) + bb


def record_hres(idx: bytes, c0: bytes, c1: bytes, bb: bytes, sigma: bytes) -> bytes:
    return pc.h_digest(idx, c0, c1, bb, sigma)


def ack_message(hreq: bytes, ts: int) -> bytes:
    return hreq + b"ok" + ts.to_bytes(8, "big")


def denial_message(hreq: bytes, code: str, ts: int) -> bytes:
    return hreq + code.encode() + ts.to_bytes(8, "big")


@dataclass(frozen=True)
class RecordEntry:
    idx: bytes
    c0: bytes
    c1: bytes
    bb: bytes
    sigma: bytes
    stored_at: float


@dataclass(frozen=True)
class StoreRequest:
    idx: bytes
    c0: bytes
    c1: bytes
    t0: bytes
    t1: bytes
    s_ms: bytes
    sigma: bytes

    @property
    def bb(self) -> bytes:
        return context_digest(self.t0, self.t1, self.s_ms)

    @property
    def hreq(self) -> bytes:
        return publish_hreq(self.idx, self.c0, self.c1, self.bb)


@dataclass(frozen=True)
class StoreAck:
    node: bytes
    hreq: bytes
    ts: int
    sig: bytes


@dataclass(frozen=True)
class RetrieveRequest:
    idx: bytes
    t0: bytes
    t1: bytes
    s_ms: bytes
    sigma: bytes

    @property
    def hreq(self) -> bytes:
        return retrieve_hreq(self.idx, context_digest(self.t0, self.t1, self.s_ms))


@dataclass(frozen=True)
class RetrieveResponse:
    node: bytes
    idx: bytes
    c0: bytes
    c1: bytes
    bb: bytes
    sigma: bytes
    sig: bytes  # node signature over hreq || hres


@dataclass(frozen=True)
class SignedDenial:
    node: bytes
    hreq: bytes
    code: str
    ts: int
    sig: bytes

    def message(self) -> bytes:
        return denial_message(self.hreq, self.code, self.ts)


class MessageStore:
    def __init__(self, nid: bytes, isk: NodeKey, trust: TrustAnchors, clock,
                 t_max: float = DEFAULT_T_MAX,
                 feedback: Callable[[FeedbackEntry], None] | None = None) -> None:
        self.nid = nid
        self.isk = isk
        self.trust = trust
        self.clock = clock
        self.t_max = t_max
        self.ledger = SpentLedger()
        self.feedback = feedback or (lambda e: None)
        self.db: dict[bytes, RecordEntry] = {}
        self._lock = threading.Lock()

    def _check(self, s_ms: bytes, t0: bytes, hreq: bytes, sigma: bytes) -> None:
        try:
            members = set_members(s_ms)
        except pc.DecodeError as exc:
            raise StoreError("bad-request", str(exc)) from exc
        if self.nid not in members:
            raise StoreError("not-a-recipient")
        if t0 in self.ledger:
            raise StoreError("token-spent")
        if not gverify(self.trust.gpk, hreq, sigma):
            raise StoreError("bad-signature")

    def _token_ok(self, t0: bytes, t1: bytes) -> bool:
        try:
            return verify_token(self.trust.vk_b, t0, pc.g1_from_bytes(t1))
        except pc.DecodeError:
            return False

    def _deny(self, kind: str, hreq: bytes, code: str, now: float, t0: bytes, t1: bytes,
              ctx: bytes, sigma: bytes, body: dict) -> StoreError:
        ts = ts_ms(now)
        d = SignedDenial(self.nid, hreq, code, ts, self.isk.sign(denial_message(hreq, code, ts)))
        self._report(kind, now, code, t0, t1, ctx, hreq, sigma, {**body, "denial_ts": ts, "denial_sig": d.sig})
        return StoreError(code, denial=d)

    def store(self, req: StoreRequest) -> StoreAck:
        now = self.clock.now()
        hreq = req.hreq
        self._check(req.s_ms, req.t0, hreq, req.sigma)
        bb = req.bb
        body = {"idx": req.idx, "s_ms": req.s_ms, "hreq": hreq}
        if not self._token_ok(req.t0, req.t1):
            raise self._deny(KIND_PUB, hreq, "bad-token", now, req.t0, req.t1, bb, req.sigma, body)
        if len(req.idx) != pc.DIGEST_SIZE or len(req.c0) != 32:
            raise self._deny(KIND_PUB, hreq, "bad-request", now, req.t0, req.t1, bb, req.sigma, body)
        with self._lock:
            cur = self.db.get(req.idx)
            if cur is not None and now - cur.stored_at <= self.t_max:
                dup = True
            else:
                dup = False
                if not self.ledger.try_mark(req.t0, req.t1, bb, now):
                    raise StoreError("token-spent")
                self.db[req.idx] = RecordEntry(req.idx, req.c0, req.c1, bb, req.sigma, now)
        if dup:
            raise self._deny(KIND_PUB, hreq, "duplicate-idx", now, req.t0, req.t1, bb, req.sigma, body)
        ts = ts_ms(now)
        ack = StoreAck(self.nid, hreq, ts, self.isk.sign(ack_message(hreq, ts)))
        self._report(KIND_PUB, now, "ok", req.t0, req.t1, bb, hreq, req.sigma,
                     {**body, "stored_at": ts, "ack": ack.sig})
        return ack

    def retrieve(self, req: RetrieveRequest) -> RetrieveResponse:
        now = self.clock.now()
        hreq = req.hreq
        self._check(req.s_ms, req.t0, hreq, req.sigma)
        ctx = context_digest(req.t0, req.t1, req.s_ms)
        body = {"idx": req.idx, "s_ms": req.s_ms, "hreq": hreq}
        if not self._token_ok(req.t0, req.t1):
            raise self._deny(KIND_RET, hreq, "bad-token", now, req.t0, req.t1, ctx, req.sigma, body)
        with self._lock:
            rec = self.db.get(req.idx)
            if rec is not None and now - rec.stored_at > self.t_max:
                del self.db[req.idx]
                rec = None
        if rec is None:
            raise self._deny(KIND_RET, hreq, "not-found", now, req.t0, req.t1, ctx, req.sigma, body)
        if not self.ledger.try_mark(req.t0, req.t1, ctx, now):
            raise StoreError("token-spent")
        hres = record_hres(rec.idx, rec.c0, rec.c1, rec.bb, rec.sigma)
        sig = self.isk.sign(hreq + hres)
        self._report(KIND_RET, now, "ok", req.t0, req.t1, ctx, hreq, req.sigma,
                     {**body, "hres": hres, "sig_r": sig})
        return RetrieveResponse(self.nid, rec.idx, rec.c0, rec.c1, rec.bb, rec.sigma, sig)

    def expire_sweep(self, now: float | None = None) -> int:
        now = self.clock.now() if now is None else now
        with self._lock:
            dead = [k for k, r in self.db.items() if r.stored_at + self.t_max < now]
            for k in dead:
                del self.db[k]
        return len(dead)

    def _report(self, kind: str, now: float, outcome: str, t0: bytes, t1: bytes, ctx: bytes,
                hreq: bytes, gsig: bytes, body: dict) -> None:
        e = FeedbackEntry(kind, self.nid, now, outcome, t0, t1, ctx, hreq, gsig, body)
        e = FeedbackEntry(**{**e.__dict__, "node_sig": self.isk.sign(e.signing_digest())})
        self.feedback(e)
