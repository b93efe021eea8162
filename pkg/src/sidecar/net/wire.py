"""Wire messages in two encodings.

Canonical JSON: ``{"v":1,"kind":...,"status":...,"body":{...}}`` with body
fields in a fixed per-kind order, byte fields as unpadded base64url and no
insignificant whitespace. Binary: ``u8 version | u8 kind | u8 status`` then
each schema field in order, length-prefixed.
"""

from __future__ import annotations

import base64
import binascii
import json
import struct
from dataclasses import dataclass
from typing import Any

from sidecar.crypto import pairing as pc
from sidecar.evaluator import EvalRequest, EvalResponse, set_members
from sidecar.msgstore import (
    RetrieveRequest,
    RetrieveResponse,
    SignedDenial,
    StoreAck,
    StoreError,
    StoreRequest,
)

VERSION = 1

REQUEST, RESPONSE, ERROR = "req", "ok", "err"
STATUS_CODES = {REQUEST: 0, RESPONSE: 1, ERROR: 2}
KIND_CODES = {
    "evaluate": 1, "store": 2, "retrieve": 3, "register": 4, "mint": 5,
    "als-append": 6, "registry-sync": 7, "pulse": 8, "params": 9,
}

B, I, S, LB, J = "bytes", "int", "str", "list[bytes]", "json"

ERROR_SCHEMA = [("code", S), ("message", S), ("denial_node", B), ("denial_hreq", B),
                ("denial_ts", I), ("denial_sig", B)]

SCHEMAS: dict[tuple[str, str], list[tuple[str, str]]] = {
    ("evaluate", REQUEST): [("i_k", I), ("x", B), ("t0", B), ("t1", B), ("s_ev", LB), ("sigma", B)],
    ("evaluate", RESPONSE): [("node", B), ("Y", LB), ("sigma", B)],
    ("store", REQUEST): [("idx", B), ("c0", B), ("c1", B), ("t0", B), ("t1", B), ("s_ms", LB), ("sigma", B)],
    ("store", RESPONSE): [("node", B), ("hreq", B), ("ts", I), ("sig", B)],
    ("retrieve", REQUEST): [("idx", B), ("t0", B), ("t1", B), ("s_ms", LB), ("sigma", B)],
    ("retrieve", RESPONSE): [("node", B), ("idx", B), ("c0", B), ("c1", B), ("bb", B), ("sigma", B), ("sig", B)],
    ("register", REQUEST): [("entity", S), ("identity", S), ("nip", S), ("ntyp", S), ("ipk", B)],
    ("register", RESPONSE): [("nid", B), ("gsk", B), ("gpk", B)],
    ("mint", REQUEST): [("provider", S), ("cycle", I), ("xs", LB), ("sigma", B)],
    ("mint", RESPONSE): [("ys", LB)],
    ("als-append", REQUEST): [("list", S), ("entry", J)],
    ("als-append", RESPONSE): [("seq", I), ("digest", B)],
    ("registry-sync", REQUEST): [("version", I)],
    ("registry-sync", RESPONSE): [("snapshot", J)],
    ("pulse", REQUEST): [],
    ("pulse", RESPONSE): [("status", S), ("role", S)],
    ("params", REQUEST): [],
    ("params", RESPONSE): [("gpk", B), ("vk_b", B), ("cycle", I), ("revocations", LB)],
}


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class WireMessage:
    kind: str
    status: str
    body: dict
    version: int = VERSION


def schema(kind: str, status: str) -> list[tuple[str, str]]:
    if status == ERROR:
        return ERROR_SCHEMA
    try:
        return SCHEMAS[(kind, status)]
    except KeyError:
        raise WireError(f"no schema for {kind}/{status}") from None


def _b64(b: bytes) -> str:
    return base64.urlsafe_b64encode(b).rstrip(b"=").decode()


def _unb64(s: Any) -> bytes:
    if not isinstance(s, str):
        raise WireError("expected base64url string")
    try:
        out = base64.b64decode(s + "=" * (-len(s) % 4), altchars=b"-_", validate=True)
    except (binascii.Error, ValueError) as exc:
        raise WireError("bad base64url") from exc
    if _b64(out) != s:  # reject non-canonical padding bits and '=' in the input
        raise WireError("non-canonical base64url")
    return out


def _check(msg: WireMessage) -> list[tuple[str, str]]:
    if msg.version != VERSION:
        raise WireError(f"unsupported version {msg.version}")
    if msg.kind not in KIND_CODES:
        raise WireError(f"unknown kind {msg.kind}")
    if msg.status not in STATUS_CODES:
        raise WireError(f"unknown status {msg.status}")
    sch = schema(msg.kind, msg.status)
    if set(msg.body) != {f for f, _ in sch}:
        raise WireError("body fields do not match schema")
    return sch


# ------------------------------------------------------------ JSON

def _json_val(v: Any, t: str) -> Any:
    if t == B:
        return _b64(v)
    if t == LB:
        return [_b64(x) for x in v]
    if t == I:
        return int(v)
    return v


def encode_json(msg: WireMessage) -> bytes:
    sch = _check(msg)
    body = {f: _json_val(msg.body[f], t) for f, t in sch}
    # dicts keep insertion order, so field order is the schema order
    doc = {"v": msg.version, "kind": msg.kind, "status": msg.status, "body": body}
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=True).encode()


def decode_json(data: bytes) -> WireMessage:
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise WireError("malformed JSON") from exc
    if not isinstance(doc, dict) or set(doc) != {"v", "kind", "status", "body"}:
        raise WireError("malformed envelope")
    if doc["v"] != VERSION:
        raise WireError(f"unsupported version {doc['v']}")
    kind, status, raw = doc["kind"], doc["status"], doc["body"]
    if kind not in KIND_CODES or status not in STATUS_CODES or not isinstance(raw, dict):
        raise WireError("malformed envelope")
    sch = schema(kind, status)
    if set(raw) != {f for f, _ in sch}:
        raise WireError("body fields do not match schema")
    body = {}
    for f, t in sch:
        v = raw[f]
        if t == B:
            body[f] = _unb64(v)
        elif t == LB:
            if not isinstance(v, list):
                raise WireError(f"{f} must be a list")
            body[f] = [_unb64(x) for x in v]
        elif t == I:
            if not isinstance(v, int) or isinstance(v, bool):
                raise WireError(f"{f} must be an integer")
            body[f] = v
        elif t == S:
            if not isinstance(v, str):
                raise WireError(f"{f} must be a string")
            body[f] = v
        else:
            body[f] = v
    return WireMessage(kind, status, body, doc["v"])


# ------------------------------------------------------------ binary

_KIND_BY_CODE = {v: k for k, v in KIND_CODES.items()}
_STATUS_BY_CODE = {v: k for k, v in STATUS_CODES.items()}


def _lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def encode_binary(msg: WireMessage) -> bytes:
    sch = _check(msg)
    out = [bytes([msg.version, KIND_CODES[msg.kind], STATUS_CODES[msg.status]])]
    for f, t in sch:
        v = msg.body[f]
        if t == B:
            out.append(_lp(v))
        elif t == I:
            out.append(struct.pack(">q", v))
        elif t == S:
            out.append(_lp(v.encode()))
        elif t == LB:
            out.append(struct.pack(">I", len(v)) + b"".join(_lp(x) for x in v))
        else:
            out.append(_lp(json.dumps(v, sort_keys=True, separators=(",", ":")).encode()))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.data):
            raise WireError("truncated message")
        b = self.data[self.off:self.off + n]
        self.off += n
        return b

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]


def decode_binary(data: bytes) -> WireMessage:
    r = _Reader(data)
    version, kc, sc = r.take(3)
    if version != VERSION:
        raise WireError(f"unsupported version {version}")
    if kc not in _KIND_BY_CODE or sc not in _STATUS_BY_CODE:
        raise WireError("unknown kind or status")
    kind, status = _KIND_BY_CODE[kc], _STATUS_BY_CODE[sc]
    body: dict = {}
    for f, t in schema(kind, status):
        if t == B:
            body[f] = r.take(r.u32())
        elif t == I:
            body[f] = struct.unpack(">q", r.take(8))[0]
        elif t == S:
            try:
                body[f] = r.take(r.u32()).decode()
            except UnicodeDecodeError as exc:
                raise WireError("bad utf-8") from exc
        elif t == LB:
            count = r.u32()
            if count > len(data):
                raise WireError("bad list length")
            body[f] = [r.take(r.u32()) for _ in range(count)]
        else:
            try:
                body[f] = json.loads(r.take(r.u32()))
            except ValueError as exc:
                raise WireError("bad embedded JSON") from exc
    if r.off != len(data):
        raise WireError("trailing bytes")
    return WireMessage(kind, status, body, version)


def encode(msg: WireMessage, binary: bool = False) -> bytes:
    return encode_binary(msg) if binary else encode_json(msg)


def decode(data: bytes, binary: bool = False) -> WireMessage:
    return decode_binary(data) if binary else decode_json(data)


# ------------------------------------------------------------ role objects

def _nids(s: bytes) -> list[bytes]:
    return set_members(s)


def _join_nids(v: list[bytes]) -> bytes:
    if any(len(n) != pc.DIGEST_SIZE for n in v):
        raise WireError("node ids must be 32 bytes")
    return b"".join(sorted(v))


def to_wire(obj: Any) -> WireMessage:
    if isinstance(obj, EvalRequest):
        return WireMessage("evaluate", REQUEST, {"i_k": obj.i_k, "x": obj.x, "t0": obj.t0, "t1": obj.t1,
                                                 "s_ev": _nids(obj.s_ev), "sigma": obj.sigma})
    if isinstance(obj, EvalResponse):
        return WireMessage("evaluate", RESPONSE, {"node": obj.node, "Y": [y + pk for y, pk in obj.Y],
                                                  "sigma": obj.sigma})
    if isinstance(obj, StoreRequest):
        return WireMessage("store", REQUEST, {"idx": obj.idx, "c0": obj.c0, "c1": obj.c1, "t0": obj.t0,
                                              "t1": obj.t1, "s_ms": _nids(obj.s_ms), "sigma": obj.sigma})
    if isinstance(obj, StoreAck):
        return WireMessage("store", RESPONSE, {"node": obj.node, "hreq": obj.hreq, "ts": obj.ts, "sig": obj.sig})
    if isinstance(obj, RetrieveRequest):
        return WireMessage("retrieve", REQUEST, {"idx": obj.idx, "t0": obj.t0, "t1": obj.t1,
                                                 "s_ms": _nids(obj.s_ms), "sigma": obj.sigma})
    if isinstance(obj, RetrieveResponse):
        return WireMessage("retrieve", RESPONSE, {"node": obj.node, "idx": obj.idx, "c0": obj.c0, "c1": obj.c1,
                                                  "bb": obj.bb, "sigma": obj.sigma, "sig": obj.sig})
    raise TypeError(f"no wire mapping for {type(obj).__name__}")


def from_wire(msg: WireMessage) -> Any:
    b = msg.body
    key = (msg.kind, msg.status)
    if key == ("evaluate", REQUEST):
        return EvalRequest(b["i_k"], b["x"], b["t0"], b["t1"], _join_nids(b["s_ev"]), b["sigma"])
    if key == ("evaluate", RESPONSE):
        step = pc.G1_SIZE
        for yp in b["Y"]:
            if len(yp) != pc.G1_SIZE + pc.G2_SIZE:
                raise WireError("bad evaluation pair")
        return EvalResponse(b["node"], [(yp[:step], yp[step:]) for yp in b["Y"]], b["sigma"])
    if key == ("store", REQUEST):
        return StoreRequest(b["idx"], b["c0"], b["c1"], b["t0"], b["t1"], _join_nids(b["s_ms"]), b["sigma"])
    if key == ("store", RESPONSE):
        return StoreAck(b["node"], b["hreq"], b["ts"], b["sig"])
    if key == ("retrieve", REQUEST):
        return RetrieveRequest(b["idx"], b["t0"], b["t1"], _join_nids(b["s_ms"]), b["sigma"])
    if key == ("retrieve", RESPONSE):
        return RetrieveResponse(b["node"], b["idx"], b["c0"], b["c1"], b["bb"], b["sigma"], b["sig"])
    raise WireError(f"no object mapping for {key}")


def error_message(kind: str, code: str, message: str = "", denial: SignedDenial | None = None) -> WireMessage:
    return WireMessage(kind, ERROR, {
        "code": code, "message": message,
        "denial_node": denial.node if denial else b"",
        "denial_hreq": denial.hreq if denial else b"",
        "denial_ts": denial.ts if denial else 0,
        "denial_sig": denial.sig if denial else b"",
    })


def error_from_wire(msg: WireMessage) -> Exception:
    """Rebuild the role-level exception carried by an error message."""
    from sidecar.evaluator import EvalError

    b = msg.body
    if msg.kind in ("store", "retrieve"):
        denial = None
        if b["denial_sig"]:
            denial = SignedDenial(b["denial_node"], b["denial_hreq"], b["code"], b["denial_ts"], b["denial_sig"])
        return StoreError(b["code"], b["message"], denial)
    if msg.kind == "evaluate":
        return EvalError(b["code"], b["message"])
    return RemoteError(b["code"], b["message"])


class RemoteError(Exception):
    def __init__(self, code: str, msg: str = "") -> None:
        super().__init__(msg or code)
        self.code = code
