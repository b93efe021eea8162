"""Anonymous pay-per-use tokens.

A token is (t0, t1) with t0 = H(provider || a) and t1 = H1(t0)^sk_b, minted
obliviously so the clearinghouse never sees t0. Nodes check the pairing
equation and keep a per-node spent ledger. One call's token is presented to
all n EVs and m MSs, so "reuse" only counts as a conflict when the same
token shows up under two different use contexts within one node role.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable

from pymcl import G1, G2, Fr

from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf
from sidecar.crypto.groupsig import GroupSigError, ManagerState
from sidecar.crypto.sig import NodeKey, verify_sig
from sidecar.logs import FeedbackEntry


class TokenError(Exception):
    code = "bad-token"


class InvalidToken(TokenError):
    code = "bad-token"


class AlreadySpent(TokenError):
    code = "token-spent"


class MintError(Exception):
    pass


@dataclass(frozen=True)
class BillingCycleKeys:
    sk_b: Fr
    vk_b: G2
    cycle_id: int


def init_cycle(prev: BillingCycleKeys | None = None,
               rng: random.Random | None = None) -> BillingCycleKeys:
    kp = voprf.KeyPair.generate(rng)
    return BillingCycleKeys(kp.sk, kp.pk, 0 if prev is None else prev.cycle_id + 1)


@dataclass(frozen=True)
class BillingToken:
    t0: bytes
    t1: G1
    cycle_id: int

    @property
    def t1_bytes(self) -> bytes:
        return pc.g1_to_bytes(self.t1)


def context_digest(t0: bytes, t1: bytes, node_set: bytes) -> bytes:
    return pc.h_digest(t0, t1, node_set)


def verify_token(vk_b: G2, t0: bytes, t1: G1) -> bool:
    return voprf.verify_output(vk_b, t0, t1)


# ------------------------------------------------------------- minting

def mint_request_digest(provider: str, cycle_id: int, xs: list[bytes]) -> bytes:
    return pc.h_digest(b"mint", provider.encode(), cycle_id.to_bytes(8, "big"),
                       len(xs).to_bytes(4, "big"), *xs)


@dataclass
class MintBatch:
    provider: str
    cycle_id: int
    states: list[voprf.BlindingState]
    xs: list[bytes]
    sig: bytes


def prepare_mint(provider: str, isk: NodeKey, count: int, cycle_id: int,
                 rng: random.Random | None = None) -> MintBatch:
    if count < 1:
        raise ValueError("count must be positive")
    states = []
    for _ in range(count):
        t0 = pc.h_digest(provider.encode(), pc.rand_bytes(32, rng))
        states.append(voprf.blind(t0, rng))
    xs = [pc.g1_to_bytes(s.x) for s in states]
    return MintBatch(provider, cycle_id, states, xs,
                     isk.sign(mint_request_digest(provider, cycle_id, xs)))


def finish_mint(batch: MintBatch, vk_b: G2, ys: list[bytes]) -> list[BillingToken]:
    """Unblind endorsements; tokens whose pairing check fails are skipped."""
    out = []
    for st, yb in zip(batch.states, ys):
        try:
            t1 = voprf.unblind(pc.g1_from_bytes(yb), st)
        except pc.DecodeError:
            continue
        if verify_token(vk_b, st.input, t1):
            out.append(BillingToken(st.input, t1, batch.cycle_id))
    return out


class Clearinghouse:
    """Issuer side of the token system; sees only blinded points and counts."""

    def __init__(self, rng: random.Random | None = None) -> None:
        self._rng = rng
        self.keys = init_cycle(None, rng)
        self.providers: dict[str, bytes] = {}
        self.issued: dict[tuple[int, str], int] = {}
        self.transcript: list[dict] = []
        self._lock = threading.Lock()

    @property
    def vk_b(self) -> G2:
        return self.keys.vk_b

    def register_provider(self, provider: str, ipk: bytes) -> None:
        self.providers[provider] = ipk

    def new_cycle(self) -> BillingCycleKeys:
        with self._lock:
            self.keys = init_cycle(self.keys, self._rng)
            return self.keys

    def mint(self, provider: str, cycle_id: int, xs: list[bytes], sig: bytes) -> list[bytes]:
        ipk = self.providers.get(provider)
        if ipk is None:
            raise MintError("unknown provider")
        keys = self.keys
        if cycle_id != keys.cycle_id:
            raise MintError("stale billing cycle")
        if not verify_sig(ipk, mint_request_digest(provider, cycle_id, xs), sig):
            raise MintError("bad batch signature")
        try:
            pts = [pc.g1_from_bytes(x) for x in xs]
        except pc.DecodeError as exc:
            raise MintError("invalid blinded element") from exc
        ys = [pc.g1_to_bytes(voprf.evaluate(keys.sk_b, p)) for p in pts]
        with self._lock:
            k = (cycle_id, provider)
            self.issued[k] = self.issued.get(k, 0) + len(xs)
            self.transcript.append({"provider": provider, "cycle": cycle_id, "xs": list(xs)})
        return ys


def mint_tokens(provider: str, isk: NodeKey, count: int, ch: Clearinghouse,
                rng: random.Random | None = None) -> list[BillingToken]:
    batch = prepare_mint(provider, isk, count, ch.keys.cycle_id, rng)
    ys = ch.mint(provider, batch.cycle_id, batch.xs, batch.sig)
    return finish_mint(batch, ch.vk_b, ys)


# ------------------------------------------------------------- spending

@dataclass(frozen=True)
class SpentEntry:
    t1: bytes
    context: bytes
    ts: float


class SpentLedger:
    """Per-node record of tokens accepted in the current cycle."""

    def __init__(self) -> None:
        self._spent: dict[bytes, SpentEntry] = {}
        self._lock = threading.Lock()

    def __contains__(self, t0: bytes) -> bool:
        return t0 in self._spent

    def __len__(self) -> int:
        return len(self._spent)

    def try_mark(self, t0: bytes, t1: bytes, context: bytes, ts: float | None = None) -> bool:
        """Atomically record a token; False if it was already present."""
        with self._lock:
            if t0 in self._spent:
                return False
            self._spent[t0] = SpentEntry(t1, context, time.time() if ts is None else ts)
            return True

    def export(self) -> list[tuple[bytes, SpentEntry]]:
        with self._lock:
            return sorted(self._spent.items())

    def reset(self) -> None:
        with self._lock:
            self._spent.clear()


def verify_and_spend(ledger: SpentLedger, vk_b: G2, t0: bytes, t1: bytes,
                     context: bytes, ts: float | None = None) -> None:
    if t0 in ledger:
        raise AlreadySpent("token already spent at this node")
    try:
        pt = pc.g1_from_bytes(t1)
    except pc.DecodeError as exc:
        raise InvalidToken("malformed t1") from exc
    if not verify_token(vk_b, t0, pt):
        raise InvalidToken("token does not verify")
    if not ledger.try_mark(t0, t1, context, ts):
        raise AlreadySpent("token already spent at this node")


# ------------------------------------------------------------- reconciliation

@dataclass
class Conflict:
    token: tuple[bytes, bytes]
    role: str
    entries: list[FeedbackEntry]

    @property
    def contexts(self) -> list[bytes]:
        return sorted({e.context for e in self.entries})


@dataclass
class ReconcileReport:
    redeemed: dict[bytes, int] = field(default_factory=dict)
    conflicts: list[Conflict] = field(default_factory=list)


def reconcile(feedback: Iterable[FeedbackEntry]) -> ReconcileReport:
    """Count redeemed tokens per node and find cross-context reuse."""
    report = ReconcileReport()
    per_node: dict[bytes, set[bytes]] = {}
    groups: dict[tuple[bytes, bytes, str], list[FeedbackEntry]] = {}
    for e in feedback:
        if e.outcome != "ok":
            continue
        per_node.setdefault(e.node, set()).add(e.t0)
        groups.setdefault((e.t0, e.t1, e.role), []).append(e)
    report.redeemed = {n: len(s) for n, s in sorted(per_node.items())}
    for (t0, t1, role), es in sorted(groups.items(), key=lambda kv: kv[0]):
        if len({e.context for e in es}) >= 2:
            report.conflicts.append(Conflict((t0, t1), role, es))
    return report


class ManualAuditRequired(Exception):
    pass


def deanonymize_faulter(conflict: Conflict | None, mgr: ManagerState) -> list[str]:
    """Open one logged request per distinct context; returns identities in context order."""
    if conflict is None or len(conflict.contexts) < 2:
        raise ValueError("not a conflict")
    out = []
    for ctx in conflict.contexts:
        e = next(x for x in conflict.entries if x.context == ctx)
        try:
            out.append(mgr.open(e.gmsg, e.gsig))
        except GroupSigError as exc:
            raise ManualAuditRequired(f"cannot open request for context {ctx.hex()[:16]}") from exc
    return out
