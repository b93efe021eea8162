"""Provider client: call-secret generation, record publish and retrieval."""

from __future__ import annotations

import itertools
import random
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from sidecar.billing import BillingToken, context_digest
from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf
from sidecar.crypto.groupsig import GroupMemberKey, RevocationEntry, gsign, gverify
from sidecar.crypto.sig import verify_sig
from sidecar.evaluator import (
    DEFAULT_S,
    EvalRequest,
    EvalResponse,
    eval_hreq,
    response_message,
)
from sidecar.msgstore import (
    RetrieveRequest,
    RetrieveResponse,
    StoreAck,
    StoreError,
    StoreRequest,
    ack_message,
    publish_hreq,
    record_hres,
    retrieve_hreq,
)
from sidecar.logs import MisbehaviorReport
from sidecar.net.transport import TransportError
from sidecar.registry import NodeRecord, Registry, set_digest_bytes

PUBLISH = "publish"
RETRIEVE = "retrieve"


class ProviderError(Exception):
    code = "provider-error"


class InsufficientEvaluations(ProviderError):
    code = "insufficient-evaluations"


class PublishFailed(ProviderError):
    code = "publish-failed"


class RecordNotFound(ProviderError):
    code = "record-not-found"


class CorruptRecord(ProviderError):
    code = "corrupt-record"


class NoTokens(ProviderError):
    code = "no-tokens"


def quantize_ts(epoch_seconds: float) -> int:
    return int(epoch_seconds // 60)


def compute_cdt(src: str, dst: str, ts: int) -> bytes:
    s, d = src.encode(), dst.encode()
    return pc.h_digest(len(s).to_bytes(2, "big"), s, len(d).to_bytes(2, "big"), d,
                       ts.to_bytes(8, "big"))


def key_index(cdt: bytes, S: int = DEFAULT_S) -> int:
    return int.from_bytes(cdt, "big") % S


def final_secret(u) -> bytes:
    return pc.h_digest(pc.g1_to_bytes(u))


@dataclass(frozen=True)
class CallDigest:
    src: str
    dst: str
    ts: int
    cdt: bytes
    i_k: int
    s_ev: tuple[NodeRecord, ...]

    @property
    def s_ev_bytes(self) -> bytes:
        return set_digest_bytes(self.s_ev)


@dataclass
class PublishResult:
    csk: bytes
    idx: bytes
    acks: list[StoreAck]
    s_ms: tuple[NodeRecord, ...]


class TokenWallet:
    """Unused tokens plus the per-call binding (one token per cdt)."""

    def __init__(self, refill: Callable[[int], list[BillingToken]] | None = None,
                 batch: int = 64) -> None:
        self._free: list[BillingToken] = []
        self._bound: dict[bytes, BillingToken] = {}
        self._refill = refill
        self._batch = batch
        self._lock = threading.Lock()

    def add(self, tokens: list[BillingToken]) -> None:
        with self._lock:
            self._free.extend(tokens)

    def __len__(self) -> int:
        return len(self._free)

    def unused(self) -> list[BillingToken]:
        with self._lock:
            return list(self._free)

    def for_call(self, cdt: bytes, fresh: bool = False) -> BillingToken:
        with self._lock:
            if not fresh and cdt in self._bound:
                return self._bound[cdt]
            if not self._free and self._refill is not None:
                self._free.extend(self._refill(self._batch))
            if not self._free:
                raise NoTokens("token wallet empty")
            tok = self._free.pop()
            self._bound[cdt] = tok
            return tok

    def release(self, cdt: bytes) -> None:
        with self._lock:
            self._bound.pop(cdt, None)


class Provider:
    def __init__(self, identity: str, gsk: GroupMemberKey, registry: Registry, net: Any,
                 clock, n: int = 3, m: int = 3, S: int = DEFAULT_S,
                 wallet: TokenWallet | None = None, rng: random.Random | None = None,
                 retries: int = 1, report_sink: Callable[[MisbehaviorReport], None] | None = None) -> None:
        self.identity = identity
        self.gsk = gsk
        self.registry = registry
        self.net = net
        self.clock = clock
        self.n = n
        self.m = m
        self.S = S
        self.wallet = wallet or TokenWallet()
        self.rng = rng
        self.retries = retries
        self.reports: list[MisbehaviorReport] = []
        self.report_sink = report_sink
        self.last_candidates: list[bytes] = []

    # ------------------------------------------------------------ helpers

    def apply_revocations(self, entries: list[RevocationEntry]) -> None:
        for e in sorted(entries, key=lambda e: e.epoch):
            self.gsk.apply_revocation(e)

    def _sign(self, msg: bytes) -> bytes:
        return gsign(self.gsk, msg, self.rng)

    def report_misbehavior(self, report: MisbehaviorReport) -> None:
        """Queue a complaint; delivery problems never reach the call path."""
        self.reports.append(report)
        if self.report_sink is not None:
            try:
                self.report_sink(report)
            except Exception:
                pass

    # ------------------------------------------------------------ call digest

    def derive_cdt(self, src: str, dst: str, now: float | None = None,
                   ts: int | None = None) -> CallDigest:
        if ts is None:
            ts = quantize_ts(self.clock.now() if now is None else now)
        cdt = compute_cdt(src, dst, ts)
        s_ev = tuple(self.registry.get_ev(cdt, self.n))
        if not s_ev:
            raise ProviderError("no evaluators registered")
        return CallDigest(src, dst, ts, cdt, key_index(cdt, self.S), s_ev)

    # ------------------------------------------------------------ call secret

    def gen_call_secret(self, mode: str, call: CallDigest,
                        token: BillingToken | None = None) -> bytes | list[bytes]:
        attempts = self.retries + 1
        for attempt in range(attempts):
            tok = token if token is not None else self.wallet.for_call(call.cdt, fresh=attempt > 0)
            try:
                return self._gen_once(mode, call, tok)
            except InsufficientEvaluations as exc:
                if attempt + 1 >= attempts or not getattr(exc, "transient", False):
                    raise
                token = None
        raise AssertionError("unreachable")

    def _gen_once(self, mode: str, call: CallDigest, tok: BillingToken) -> bytes | list[bytes]:
        st = voprf.blind(call.cdt, self.rng)
        x = pc.g1_to_bytes(st.x)
        s_ev = call.s_ev_bytes
        hreq = eval_hreq(x, call.i_k, tok.t0, tok.t1_bytes, s_ev)
        req = EvalRequest(call.i_k, x, tok.t0, tok.t1_bytes, s_ev, self._sign(hreq))
        results = self.net.fanout([(node, "evaluate", req) for node in call.s_ev])

        h1 = pc.h_to_group(call.cdt)
        g2 = pc.G2_GEN
        per_ev: list[list] = []
        transient = False
        for node, res in zip(call.s_ev, results):
            if isinstance(res, TransportError):
                transient = True
                per_ev.append([])
                continue
            if isinstance(res, Exception) or not isinstance(res, EvalResponse):
                per_ev.append([])
                continue
            vals = self._check_eval(node, res, req, st, h1, g2, mode)
            per_ev.append(vals)
        if any(not v for v in per_ev):
            exc = InsufficientEvaluations(
                f"{sum(1 for v in per_ev if v)} of {len(per_ev)} evaluators verified")
            exc.transient = transient
            raise exc
        if mode == PUBLISH:
            u = pc.g1_identity()
            for vals in per_ev:
                u = u + vals[0]
            return final_secret(u)
        out: list[bytes] = []
        for combo in itertools.product(*per_ev):
            u = pc.g1_identity()
            for v in combo:
                u = u + v
            c = final_secret(u)
            if c not in out:
                out.append(c)
        return out

    def _check_eval(self, node: NodeRecord, res: EvalResponse, req: EvalRequest,
                    st: voprf.BlindingState, h1, g2, mode: str) -> list:
        hreq = req.hreq
        if not res.Y or len(res.Y) > 2:
            return []
        if not verify_sig(node.ipk, response_message(res.Y, hreq), res.sigma):
            return []  # unsigned responses cannot be attributed, so just drop
        vals = []
        limit = 1 if mode == PUBLISH else len(res.Y)
        for k, (yb, pkb) in enumerate(res.Y[:limit]):
            try:
                v = voprf.unblind(pc.g1_from_bytes(yb), st)
                pk = pc.g2_from_bytes(pkb)
            except pc.DecodeError:
                ok = False
            else:
                ok = pc.pairing(h1, pk) == pc.pairing(v, g2)
            if ok:
                vals.append(v)
            elif k == 0:
                self.report_misbehavior(MisbehaviorReport(
                    "cidcomp", node.nid, "output fails verification",
                    {"x": req.x, "i_k": req.i_k, "t0": req.t0, "t1": req.t1, "s_ev": req.s_ev,
                     "Y": [list(p) for p in res.Y], "sigma_j": res.sigma}))
                return []
        return vals

    # ------------------------------------------------------------ publish

    def publish_record(self, csk: bytes, msg: bytes, token: BillingToken) -> PublishResult:
        idx = pc.h_digest(csk)
        c0 = pc.rand_bytes(32, self.rng)
        c1 = pc.aead_seal(pc.h_digest(c0, csk), msg, self.rng)
        s_ms = tuple(self.registry.get_ms(csk, self.m))
        if not s_ms:
            raise PublishFailed("no message stores registered")
        s_bytes = set_digest_bytes(s_ms)
        bb = context_digest(token.t0, token.t1_bytes, s_bytes)
        hreq = publish_hreq(idx, c0, c1, bb)
        req = StoreRequest(idx, c0, c1, token.t0, token.t1_bytes, s_bytes, self._sign(hreq))
        results = self.net.fanout([(node, "store", req) for node in s_ms])
        acks = []
        for node, res in zip(s_ms, results):
            if (isinstance(res, StoreAck) and res.hreq == hreq
                    and verify_sig(node.ipk, ack_message(hreq, res.ts), res.sig)):
                acks.append(res)
        if not acks:
            raise PublishFailed("no store acknowledged the record")
        return PublishResult(csk, idx, acks, s_ms)

    def publish(self, src: str, dst: str, msg: bytes, now: float | None = None) -> PublishResult:
        call = self.derive_cdt(src, dst, now)
        try:
            csk = self.gen_call_secret(PUBLISH, call)
            return self.publish_record(csk, msg, self.wallet.for_call(call.cdt))
        finally:
            self.wallet.release(call.cdt)  # a later operation on this call needs a fresh token

    # ------------------------------------------------------------ retrieve

    def retrieve_record(self, L: list[bytes], token: BillingToken) -> bytes:
        if not L:
            raise RecordNotFound("empty candidate set")
        for csk in L:
            idx = pc.h_digest(csk)
            s_ms = tuple(self.registry.get_ms(csk, self.m))
            s_bytes = set_digest_bytes(s_ms)
            ctx = context_digest(token.t0, token.t1_bytes, s_bytes)
            hreq = retrieve_hreq(idx, ctx)
            req = RetrieveRequest(idx, token.t0, token.t1_bytes, s_bytes, self._sign(hreq))
            results = self.net.fanout([(node, "retrieve", req) for node in s_ms])
            found = None
            corrupt = False
            denials = []
            for node, res in zip(s_ms, results):
                if isinstance(res, StoreError) and res.denial is not None:
                    denials.append((node, res.denial))
                    continue
                if not isinstance(res, RetrieveResponse) or found is not None:
                    continue
                if res.idx != idx:
                    continue
                hres = record_hres(res.idx, res.c0, res.c1, res.bb, res.sigma)
                if not verify_sig(node.ipk, hreq + hres, res.sig):
                    continue
                if not gverify(self.gsk.gpk, publish_hreq(res.idx, res.c0, res.c1, res.bb), res.sigma):
                    self.report_misbehavior(MisbehaviorReport(
                        "retcomp", node.nid, "record with invalid group signature",
                        {"hreq": hreq, "idx": idx, "sig_r": res.sig,
                         "record": [res.c0, res.c1, res.bb, res.sigma]}))
                    continue
                try:
                    msg = pc.aead_open(pc.h_digest(res.c0, csk), res.c1)
                except pc.AeadError:
                    corrupt = True
                    continue
                found = (msg, res)
            if found is not None:
                msg, res = found
                for node, d in denials:
                    if d.code == "not-found":
                        self.report_misbehavior(MisbehaviorReport(
                            "retcomp", node.nid, "denied a live record",
                            {"idx": idx, "ctx": ctx, "denial_hreq": d.hreq, "denial_code": d.code,
                             "denial_ts": d.ts, "denial_sig": d.sig,
                             "record": [res.c0, res.c1, res.bb, res.sigma]}))
                return msg
            if corrupt:
                raise CorruptRecord("record failed to decrypt")
        raise RecordNotFound("no candidate located a record")

    def retrieve(self, src: str, dst: str, now: float | None = None,
                 fallback: bool = True) -> bytes:
        ts = quantize_ts(self.clock.now() if now is None else now)
        tries = [ts, ts - 1] if fallback else [ts]
        last: Exception | None = None
        for t in tries:
            call = self.derive_cdt(src, dst, ts=t)
            try:
                L = self.gen_call_secret(RETRIEVE, call)
                self.last_candidates = L
                return self.retrieve_record(L, self.wallet.for_call(call.cdt))
            except RecordNotFound as exc:
                last = exc
            finally:
                self.wallet.release(call.cdt)
        raise last if last else RecordNotFound("not found")
