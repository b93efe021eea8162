"""Misbehaving node wrappers around the honest role implementations."""

from __future__ import annotations

import random

from sidecar.billing import context_digest
from sidecar.crypto import pairing as pc
from sidecar.evaluator import EvalRequest, EvalResponse, Evaluator, response_message
from sidecar.logs import KIND_RET
from sidecar.msgstore import MessageStore, RetrieveRequest, StoreRequest


class WrongKeyEV:
    """Answers with x raised to a key it never published, signed as usual."""

    def __init__(self, inner: Evaluator, rng: random.Random | None = None) -> None:
        self.inner = inner
        self.nid = inner.nid
        self._bad = pc.random_scalar(rng)

    def evaluate(self, req: EvalRequest) -> EvalResponse:
        res = self.inner.evaluate(req)
        x = pc.g1_from_bytes(req.x)
        Y = [(pc.g1_to_bytes(x * self._bad), pk) for _, pk in res.Y]
        return EvalResponse(res.node, Y, self.inner.isk.sign(response_message(Y, req.hreq)))


class DroppingMS:
    """Stores normally but denies every retrieval with a signed not-found."""

    def __init__(self, inner: MessageStore) -> None:
        self.inner = inner
        self.nid = inner.nid

    def store(self, req: StoreRequest):
        return self.inner.store(req)

    def retrieve(self, req: RetrieveRequest):
        ms = self.inner
        now = ms.clock.now()
        hreq = req.hreq
        ms._check(req.s_ms, req.t0, hreq, req.sigma)
        ctx = context_digest(req.t0, req.t1, req.s_ms)
        raise ms._deny(KIND_RET, hreq, "not-found", now, req.t0, req.t1, ctx, req.sigma,
                       {"idx": req.idx, "s_ms": req.s_ms, "hreq": hreq})
