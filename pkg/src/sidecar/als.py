"""Audit log server: hash-chained append-only lists, disputes and audits."""

from __future__ import annotations

import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable

from sidecar.crypto import pairing as pc
from sidecar.crypto.groupsig import GroupPublicKey, gverify
from sidecar.crypto.sig import verify_sig
from sidecar.evaluator import (
    RotationLogEntry,
    decode_outputs,
    eval_hreq,
    response_message,
    ts_ms,
)
from sidecar.logs import FeedbackEntry, MisbehaviorReport, canonical_json
from sidecar.msgstore import (
    ack_message,
    denial_message,
    publish_hreq,
    record_hres,
    retrieve_hreq,
)
from sidecar.registry import Registry

HONEST = "node-honest"
DISHONEST = "node-dishonest"
INSUFFICIENT = "insufficient-evidence"

LISTS = ("cidgen", "cidcomp", "retcomp", "pub", "ret", "rotation")
DEFAULT_RETENTION = 30 * 86400.0
DEFAULT_DELTA = 0.25


class AlsReject(Exception):
    def __init__(self, code: str, msg: str = "") -> None:
        super().__init__(msg or code)
        self.code = code


@dataclass(frozen=True)
class ChainEntry:
    seq: int
    prev: bytes
    digest: bytes
    payload: bytes
    ingest_ts: float
    obj: object = field(compare=False, repr=False, default=None)


class ChainedList:
    """Append-only list where each digest covers its predecessor."""

    GENESIS = bytes(32)

    def __init__(self, name: str) -> None:
        self.name = name
        self.entries: list[ChainEntry] = []
        self.anchor = self.GENESIS  # digest preceding entries[0] after pruning
        self.base_seq = 0
        self._lock = threading.Lock()

    def append(self, payload: bytes, obj: object, ts: float) -> ChainEntry:
        with self._lock:
            prev = self.entries[-1].digest if self.entries else self.anchor
            seq = self.base_seq + len(self.entries)
            e = ChainEntry(seq, prev, pc.h_digest(prev, payload), payload, ts, obj)
            self.entries.append(e)
            return e

    def head(self) -> bytes:
        return self.entries[-1].digest if self.entries else self.anchor

    def verify_chain(self) -> bool:
        prev = self.anchor
        for e in self.entries:
            if e.prev != prev or e.digest != pc.h_digest(prev, e.payload):
                return False
            prev = e.digest
        return True

    def prune_before(self, cutoff: float) -> int:
        with self._lock:
            k = 0
            while k < len(self.entries) and self.entries[k].ingest_ts < cutoff:
                k += 1
            if k:
                self.anchor = self.entries[k - 1].digest
                self.base_seq += k
                del self.entries[:k]
            return k

    def export(self) -> bytes:
        """Length-delimited payloads for offline tooling."""
        return b"".join(struct.pack(">I", len(e.payload)) + e.payload for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def parse_export(data: bytes) -> list[bytes]:
    out, off = [], 0
    while off < len(data):
        (n,) = struct.unpack_from(">I", data, off)
        off += 4
        out.append(data[off:off + n])
        off += n
    return out


def rotation_map(e: RotationLogEntry) -> dict:
    return {"node": e.node, "i": e.i, "pk": e.pk, "ts": e.ts, "sig": e.sig, "kind": e.kind}


@dataclass
class PulseRecord:
    nid: bytes
    ts: float
    rtt: float
    up: bool


@dataclass
class Anomaly:
    kind: str  # "gap" or "pk-reuse"
    node: bytes
    detail: dict


class AuditLogServer:
    def __init__(self, registry: Registry, gpk_history: Callable[[], list[GroupPublicKey]],
                 clock, t_max: float = 15.0, t_rot: float = 60.0,
                 retention: float = DEFAULT_RETENTION) -> None:
        self.registry = registry
        self._gpks = gpk_history
        self.clock = clock
        self.t_max = t_max
        self.t_rot = t_rot
        self.retention = retention
        self.lists = {name: ChainedList(name) for name in LISTS}
        self.rejected: dict[str, int] = {name: 0 for name in LISTS}
        self.pulses: list[PulseRecord] = []
        self._verified: OrderedDict[bytes, bool] = OrderedDict()
        self._rot_by_node: dict[bytes, list[RotationLogEntry]] = {}
        self._cidgen_idx: dict[tuple[bytes, bytes], FeedbackEntry] = {}
        self._pub_idx: dict[tuple[bytes, bytes], FeedbackEntry] = {}
        self._lock = threading.Lock()

    # ------------------------------------------------------------ ingest

    def _gverify_any(self, msg: bytes, sig: bytes) -> bool:
        key = pc.h_digest(msg, sig)
        hit = self._verified.get(key)
        if hit is not None:
            return hit
        ok = any(gverify(g, msg, sig) for g in reversed(self._gpks()))
        self._verified[key] = ok
        if len(self._verified) > 65536:
            self._verified.popitem(last=False)
        return ok

    def _node_ipk(self, nid: bytes) -> bytes:
        rec = self.registry.lookup(nid)
        if rec is None:
            raise AlsReject("unknown-node")
        return rec.ipk

    def _reject(self, kind: str, code: str) -> AlsReject:
        self.rejected[kind] += 1
        return AlsReject(code)

    def append(self, kind: str, entry) -> ChainEntry:
        if kind not in LISTS:
            raise AlsReject("unknown-list")
        try:
            if kind == "rotation":
                return self._append_rotation(entry)
            if kind in ("cidcomp", "retcomp"):
                return self._append_complaint(kind, entry)
            return self._append_feedback(kind, entry)
        except AlsReject as exc:
            if exc.code == "unknown-node":
                self.rejected[kind] += 1
            raise

    def _append_rotation(self, e: RotationLogEntry) -> ChainEntry:
        ipk = self._node_ipk(e.node)
        if not verify_sig(ipk, e.message(), e.sig):
            raise self._reject("rotation", "bad-signature")
        ce = self.lists["rotation"].append(canonical_json(rotation_map(e)), e, self.clock.now())
        with self._lock:
            self._rot_by_node.setdefault(e.node, []).append(e)
        return ce

    def _append_feedback(self, kind: str, e: FeedbackEntry) -> ChainEntry:
        if e.kind != kind:
            raise self._reject(kind, "wrong-list")
        ipk = self._node_ipk(e.node)
        if not verify_sig(ipk, e.signing_digest(), e.node_sig):
            raise self._reject(kind, "bad-signature")
        if not self._gverify_any(e.gmsg, e.gsig):
            raise self._reject(kind, "bad-signature")
        ce = self.lists[kind].append(canonical_json(e.to_map()), e, self.clock.now())
        with self._lock:
            if kind == "cidgen":
                self._cidgen_idx.setdefault((e.node, e.gmsg), e)
            elif kind == "pub" and e.outcome == "ok":
                self._pub_idx.setdefault((e.node, e.body["idx"]), e)
        return ce

    def _append_complaint(self, kind: str, r: MisbehaviorReport) -> ChainEntry:
        if r.kind != kind:
            raise self._reject(kind, "wrong-list")
        self._node_ipk(r.target)
        ev = r.evidence
        key = "sigma_j" if kind == "cidcomp" else ("denial_sig" if "denial_sig" in ev else "sig_r")
        sig = ev.get(key, b"")
        if not isinstance(sig, bytes) or len(sig) != 64:
            raise self._reject(kind, "missing-node-signature")
        return self.lists[kind].append(canonical_json(r.to_map()), r, self.clock.now())

    # ------------------------------------------------------------ lookups

    def pk_at(self, nid: bytes, i: int, ts: int) -> bytes | None:
        best = None
        for e in self._rot_by_node.get(nid, ()):
            if e.i == i and e.ts <= ts and (best is None or e.ts >= best.ts):
                best = e
        return best.pk if best else None

    def rotation_entries(self, nid: bytes) -> list[RotationLogEntry]:
        return list(self._rot_by_node.get(nid, ()))

    def feedback(self, kinds: Iterable[str] = ("cidgen", "pub", "ret")) -> list[FeedbackEntry]:
        out = []
        for k in kinds:
            out.extend(e.obj for e in self.lists[k])
        return out

    # ------------------------------------------------------------ disputes

    def resolve_dispute(self, kind: str, seq: int) -> str:
        lst = self.lists[kind]
        pos = seq - lst.base_seq
        if not 0 <= pos < len(lst):
            return INSUFFICIENT
        r: MisbehaviorReport = lst.entries[pos].obj
        if kind == "cidcomp":
            return self._resolve_ev(r)
        return self._resolve_ms(r)

    def resolve_all(self, kind: str) -> list[tuple[MisbehaviorReport, str]]:
        return [(e.obj, self.resolve_dispute(kind, e.seq)) for e in self.lists[kind]]

    def _resolve_ev(self, r: MisbehaviorReport) -> str:
        ev = r.evidence
        try:
            ipk = self._node_ipk(r.target)
            hreq = eval_hreq(ev["x"], ev["i_k"], ev["t0"], ev["t1"], ev["s_ev"])
            x = pc.g1_from_bytes(ev["x"])
        except (AlsReject, KeyError, pc.DecodeError):
            return INSUFFICIENT
        logged = self._cidgen_idx.get((r.target, hreq))
        claimed = [tuple(p) for p in ev.get("Y", [])]
        if claimed and verify_sig(ipk, response_message(claimed, hreq), ev["sigma_j"]):
            Y = claimed  # the node committed to exactly these outputs
            ts = ts_ms(logged.ts) if logged else None
        elif logged is not None and logged.outcome == "ok":
            Y = decode_outputs(logged.body["Y"])
            if not verify_sig(ipk, response_message(Y, hreq), logged.body["sigma_j"]):
                return DISHONEST
            ts = ts_ms(logged.ts)
        else:
            return INSUFFICIENT
        y0, pk0 = Y[0]
        try:
            y = pc.g1_from_bytes(y0)
            pk = pc.g2_from_bytes(pk0)
        except pc.DecodeError:
            return DISHONEST
        if not pc.pairing_check(pk, x, pc.G2_GEN, y):
            return DISHONEST
        if ts is not None:
            expected = self.pk_at(r.target, ev["i_k"], ts)
            if expected is not None and expected != pk0:
                return DISHONEST
        return HONEST

    def _resolve_ms(self, r: MisbehaviorReport) -> str:
        ev = r.evidence
        try:
            ipk = self._node_ipk(r.target)
        except AlsReject:
            return INSUFFICIENT
        idx = ev.get("idx", b"")
        if "denial_sig" in ev:
            d_hreq, code, ts = ev["denial_hreq"], ev["denial_code"], ev["denial_ts"]
            if not verify_sig(ipk, denial_message(d_hreq, code, ts), ev["denial_sig"]):
                return INSUFFICIENT
            if d_hreq != retrieve_hreq(idx, ev["ctx"]) or code != "not-found":
                return INSUFFICIENT
            pub = self._pub_idx.get((r.target, idx))
            if pub is None:
                return INSUFFICIENT
            stored = pub.body["stored_at"]
            if not verify_sig(ipk, ack_message(pub.body["hreq"], stored), pub.body["ack"]):
                return INSUFFICIENT
            if ts - stored <= ts_ms(self.t_max) - 1:
                return DISHONEST
            return HONEST
        # served a record whose group signature does not verify
        try:
            c0, c1, bb, sigma = ev["record"]
            hres = record_hres(idx, c0, c1, bb, sigma)
            if not verify_sig(ipk, ev["hreq"] + hres, ev["sig_r"]):
                return INSUFFICIENT
        except (KeyError, ValueError):
            return INSUFFICIENT
        if self._gverify_any(publish_hreq(idx, c0, c1, bb), sigma):
            return HONEST
        return DISHONEST

    # ------------------------------------------------------------ audits

    def rotation_audit(self, nid: bytes, window: tuple[float, float] | None = None,
                       delta: float = DEFAULT_DELTA) -> list[Anomaly]:
        entries = sorted(self._rot_by_node.get(nid, ()), key=lambda e: e.ts)
        if window is not None:
            lo, hi = ts_ms(window[0]), ts_ms(window[1])
            entries = [e for e in entries if lo <= e.ts <= hi]
        out: list[Anomaly] = []
        seen: dict[bytes, RotationLogEntry] = {}
        for e in entries:
            if e.pk in seen:
                out.append(Anomaly("pk-reuse", nid, {"i": e.i, "ts": e.ts, "first_ts": seen[e.pk].ts}))
            else:
                seen[e.pk] = e
        rot = [e for e in entries if e.kind == "rotate"]
        lo_gap = self.t_rot * (1 - delta) * 1000
        hi_gap = self.t_rot * (1 + delta) * 1000
        for a, b in zip(rot, rot[1:]):
            gap = b.ts - a.ts
            if not lo_gap <= gap <= hi_gap:
                out.append(Anomaly("gap", nid, {"from": a.ts, "to": b.ts, "gap_ms": gap}))
        return out

    def pulse(self, probe: Callable[[object], tuple[bool, float]]) -> list[PulseRecord]:
        """Probe every registered node once (``probe`` returns (up, rtt))."""
        now = self.clock.now()
        out = []
        for rec in self.registry.nodes():
            try:
                up, rtt = probe(rec)
            except Exception:
                up, rtt = False, float("inf")
            out.append(PulseRecord(rec.nid, now, rtt, bool(up)))
        self.pulses.extend(out)
        return out

    def availability(self, window: tuple[float, float] | None = None) -> dict[bytes, float]:
        counts: dict[bytes, list[int]] = {}
        for p in self.pulses:
            if window is not None and not window[0] <= p.ts <= window[1]:
                continue
            c = counts.setdefault(p.nid, [0, 0])
            c[0] += p.up
            c[1] += 1
        return {k: up / tot for k, (up, tot) in counts.items()}

    def sla_flags(self, threshold: float = 0.99,
                  window: tuple[float, float] | None = None) -> list[bytes]:
        return sorted(n for n, a in self.availability(window).items() if a < threshold)

    def prune(self) -> int:
        cutoff = self.clock.now() - self.retention
        return sum(lst.prune_before(cutoff) for lst in self.lists.values())
