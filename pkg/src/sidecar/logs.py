"""Feedback entries that nodes send to the audit log service."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Any

from sidecar.crypto.pairing import h_digest

# entry kinds and the node role they belong to
KIND_CIDGEN = "cidgen"   # call-secret evaluation at an EV
KIND_PUB = "pub"         # record publish at an MS
KIND_RET = "ret"         # record retrieval at an MS
ROLE_OF_KIND = {KIND_CIDGEN: "EV", KIND_PUB: "MS", KIND_RET: "MS"}


def b64(b: bytes) -> str:
    return base64.urlsafe_b64encode(b).rstrip(b"=").decode()


def unb64(s: str) -> bytes:
    return base64.urlsafe_b64decode(s + "=" * (-len(s) % 4))


def _enc(v: Any) -> Any:
    if isinstance(v, (bytes, bytearray)):
        return {"b": b64(bytes(v))}
    if isinstance(v, (list, tuple)):
        return [_enc(x) for x in v]
    if isinstance(v, dict):
        return {k: _enc(x) for k, x in v.items()}
    return v


def _dec(v: Any) -> Any:
    if isinstance(v, dict):
        if set(v) == {"b"}:
            return unb64(v["b"])
        return {k: _dec(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_dec(x) for x in v]
    return v


def canonical_json(obj: Any) -> bytes:
    return json.dumps(_enc(obj), sort_keys=True, separators=(",", ":")).encode()


def from_canonical_json(data: bytes | str) -> Any:
    return _dec(json.loads(data))


@dataclass(frozen=True)
class FeedbackEntry:
    kind: str
    node: bytes          # nid of the reporting node
    ts: float
    outcome: str         # "ok" or an error code
    t0: bytes
    t1: bytes
    context: bytes       # token-use context digest H(t0 || t1 || S)
    gmsg: bytes          # digest the group signature covers
    gsig: bytes
    body: dict = field(default_factory=dict)
    node_sig: bytes = b""

    @property
    def role(self) -> str:
        return ROLE_OF_KIND[self.kind]

    def unsigned_map(self) -> dict:
        return {
            "kind": self.kind, "node": self.node, "ts": self.ts, "outcome": self.outcome,
            "t0": self.t0, "t1": self.t1, "context": self.context,
            "gmsg": self.gmsg, "gsig": self.gsig, "body": self.body,
        }

    def signing_digest(self) -> bytes:
        return h_digest(canonical_json(self.unsigned_map()))

    def to_map(self) -> dict:
        m = self.unsigned_map()
        m["node_sig"] = self.node_sig
        return m

    @classmethod
    def from_map(cls, m: dict) -> "FeedbackEntry":
        return cls(
            m["kind"], m["node"], m["ts"], m["outcome"], m["t0"], m["t1"], m["context"],
            m["gmsg"], m["gsig"], m.get("body", {}), m.get("node_sig", b""),
        )


@dataclass
class MisbehaviorReport:
    kind: str          # "cidcomp" (evaluator) or "retcomp" (message store)
    target: bytes      # accused nid
    reason: str
    evidence: dict

    def to_map(self) -> dict:
        return {"kind": self.kind, "target": self.target, "reason": self.reason,
                "evidence": self.evidence}
