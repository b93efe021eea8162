"""Evaluator node: a ring of rotating OPRF keys and the evaluate handler."""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from typing import Callable

from sidecar.billing import SpentLedger, context_digest, verify_token
from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf
from sidecar.crypto.groupsig import gverify
from sidecar.crypto.sig import NodeKey
from sidecar.logs import KIND_CIDGEN, FeedbackEntry
from sidecar.trust import TrustAnchors

DEFAULT_S = 64
DEFAULT_T_ROT = 60.0
DEFAULT_EPS_T = 5.0


class EvalError(Exception):
    def __init__(self, code: str, msg: str = "") -> None:
        super().__init__(msg or code)
        self.code = code


def ts_ms(t: float) -> int:
    return int(round(t * 1000))


def rotation_message(i: int, pk: bytes, ts: int) -> bytes:
    return i.to_bytes(4, "big") + pk + ts.to_bytes(8, "big")


@dataclass(frozen=True)
class RotationLogEntry:
    node: bytes
    i: int
    pk: bytes
    ts: int  # milliseconds
    sig: bytes
    kind: str = "rotate"  # "init" for the initial ring

    def message(self) -> bytes:
        return rotation_message(self.i, self.pk, self.ts)


class KeySchedule:
    def __init__(self, now: float, S: int = DEFAULT_S, t_rot: float = DEFAULT_T_ROT,
                 eps_t: float = DEFAULT_EPS_T, rng: random.Random | None = None) -> None:
        self.S = S
        self.t_rot = t_rot
        self.eps_t = eps_t
        self._rng = rng
        self.K = [voprf.KeyPair.generate(rng) for _ in range(S)]
        self.cursor = 0
        self.k_exp: voprf.KeyPair | None = None
        self.t_exp = now
        self.lock = threading.Lock()

    def due(self, now: float) -> bool:
        return now >= self.t_exp + self.t_rot

    def rotate(self, now: float) -> tuple[int, voprf.KeyPair]:
        """Replace slot ``cursor``; the replaced pair becomes k_exp."""
        fresh = voprf.KeyPair.generate(self._rng)
        with self.lock:
            i = self.cursor
            self.k_exp = self.K[i]
            self.K[i] = fresh
            self.t_exp = now
            self.cursor = (i + 1) % self.S
        return i, fresh

    def purge(self, now: float) -> bool:
        """Erase k_exp once its grace window has passed."""
        with self.lock:
            if self.k_exp is not None and now >= self.t_exp + self.eps_t:
                self.k_exp = None
                return True
        return False

    def keys_for(self, i_k: int, now: float) -> list[voprf.KeyPair]:
        with self.lock:
            out = [self.K[i_k]]
            if (self.k_exp is not None and i_k == (self.cursor - 1) % self.S
                    and self.t_exp + self.eps_t > now):
                out.append(self.k_exp)
        return out

    def held_keys(self) -> list[voprf.KeyPair]:
        with self.lock:
            return list(self.K) + ([self.k_exp] if self.k_exp is not None else [])


def eval_hreq(x: bytes, i_k: int, t0: bytes, t1: bytes, s_ev: bytes) -> bytes:
    return pc.h_digest(x, i_k.to_bytes(4, "big"), t0, t1, s_ev)


def encode_outputs(Y: list[tuple[bytes, bytes]]) -> bytes:
    return bytes([len(Y)]) + b"".join(y + pk for y, pk in Y)


def decode_outputs(data: bytes) -> list[tuple[bytes, bytes]]:
    if not data:
        raise pc.DecodeError("empty output list")
    n = data[0]
    step = pc.G1_SIZE + pc.G2_SIZE
    if len(data) != 1 + n * step:
        raise pc.DecodeError("bad output list")
    return [(data[1 + k * step: 1 + k * step + pc.G1_SIZE],
             data[1 + k * step + pc.G1_SIZE: 1 + (k + 1) * step]) for k in range(n)]


def response_message(Y: list[tuple[bytes, bytes]], hreq: bytes) -> bytes:
    return pc.h_digest(encode_outputs(Y), hreq)


@dataclass(frozen=True)
class EvalRequest:
    i_k: int
    x: bytes
    t0: bytes
    t1: bytes
    s_ev: bytes  # canonical set encoding (sorted nids)
    sigma: bytes

    @property
    def hreq(self) -> bytes:
        return eval_hreq(self.x, self.i_k, self.t0, self.t1, self.s_ev)


@dataclass(frozen=True)
class EvalResponse:
    node: bytes
    Y: list[tuple[bytes, bytes]]
    sigma: bytes


def set_members(s: bytes) -> list[bytes]:
    if len(s) % pc.DIGEST_SIZE:
        raise pc.DecodeError("bad node-set encoding")
    return [s[i:i + pc.DIGEST_SIZE] for i in range(0, len(s), pc.DIGEST_SIZE)]


class Evaluator:
    def __init__(self, nid: bytes, isk: NodeKey, trust: TrustAnchors, clock,
                 S: int = DEFAULT_S, t_rot: float = DEFAULT_T_ROT, eps_t: float = DEFAULT_EPS_T,
                 feedback: Callable[[FeedbackEntry], None] | None = None,
                 rotation_log: Callable[[RotationLogEntry], None] | None = None,
                 rng: random.Random | None = None) -> None:
        self.nid = nid
        self.isk = isk
        self.trust = trust
        self.clock = clock
        self.ledger = SpentLedger()
        self.feedback = feedback or (lambda e: None)
        self.rotation_log = rotation_log or (lambda e: None)
        self.schedule = KeySchedule(clock.now(), S, t_rot, eps_t, rng)
        now = ts_ms(clock.now())
        for i, kp in enumerate(self.schedule.K):
            self.rotation_log(self._log_entry(i, kp, now, "init"))

    def _log_entry(self, i: int, kp: voprf.KeyPair, ts: int, kind: str) -> RotationLogEntry:
        pk = pc.g2_to_bytes(kp.pk)
        return RotationLogEntry(self.nid, i, pk, ts, self.isk.sign(rotation_message(i, pk, ts)), kind)

    def rotate(self) -> RotationLogEntry:
        now = self.clock.now()
        i, kp = self.schedule.rotate(now)
        entry = self._log_entry(i, kp, ts_ms(now), "rotate")
        self.rotation_log(entry)
        return entry

    def tick(self) -> list[RotationLogEntry]:
        """Run due rotations and purge the expired key; called by the scheduler."""
        out = []
        now = self.clock.now()
        self.schedule.purge(now)
        if self.schedule.due(now):
            out.append(self.rotate())
        return out

    def evaluate(self, req: EvalRequest) -> EvalResponse:
        now = self.clock.now()
        try:
            members = set_members(req.s_ev)
        except pc.DecodeError as exc:
            raise EvalError("bad-request", str(exc)) from exc
        if self.nid not in members:
            raise EvalError("not-a-recipient")
        if req.t0 in self.ledger:
            raise EvalError("token-spent")
        if not 0 <= req.i_k < self.schedule.S:
            raise EvalError("bad-request", "key index out of range")
        hreq = req.hreq
        if not gverify(self.trust.gpk, hreq, req.sigma):
            raise EvalError("bad-signature")
        ctx = context_digest(req.t0, req.t1, req.s_ev)
        try:
            x = pc.g1_from_bytes(req.x)
        except pc.DecodeError as exc:
            self._report(req, hreq, ctx, now, "bad-request", [], b"")
            raise EvalError("bad-request", "invalid blinded element") from exc
        try:
            token_ok = verify_token(self.trust.vk_b, req.t0, pc.g1_from_bytes(req.t1))
        except pc.DecodeError:
            token_ok = False
        if not token_ok:
            self._report(req, hreq, ctx, now, "bad-token", [], b"")
            raise EvalError("bad-token")
        Y = [(pc.g1_to_bytes(voprf.evaluate(kp.sk, x)), pc.g2_to_bytes(kp.pk))
             for kp in self.schedule.keys_for(req.i_k, now)]
        sigma = self.isk.sign(response_message(Y, hreq))
        if not self.ledger.try_mark(req.t0, req.t1, ctx, now):
            self._report(req, hreq, ctx, now, "token-spent", [], b"")
            raise EvalError("token-spent")
        self._report(req, hreq, ctx, now, "ok", Y, sigma)
        return EvalResponse(self.nid, Y, sigma)

    def _report(self, req: EvalRequest, hreq: bytes, ctx: bytes, now: float,
                outcome: str, Y: list, sigma: bytes) -> None:
        body = {"x": req.x, "i_k": req.i_k, "s_ev": req.s_ev, "hreq": hreq,
                "Y": encode_outputs(Y) if Y else b"", "sigma_j": sigma}
        e = FeedbackEntry(KIND_CIDGEN, self.nid, now, outcome, req.t0, req.t1, ctx,
                          hreq, req.sigma, body)
        e = FeedbackEntry(**{**e.__dict__, "node_sig": self.isk.sign(e.signing_digest())})
        self.feedback(e)
