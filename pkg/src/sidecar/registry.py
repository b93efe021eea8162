"""Public node registry and XOR-metric node selection."""

from __future__ import annotations

import base64
import heapq
import json
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from sidecar.crypto.pairing import h_digest


class NodeType(str, Enum):
    EV = "EV"
    MS = "MS"


class RegistryError(Exception):
    pass


def compute_nid(nip: str, ntyp: NodeType, ipk: bytes) -> bytes:
    return h_digest(nip.encode(), NodeType(ntyp).value.encode(), ipk)


def _b64(b: bytes) -> str:
    return base64.urlsafe_b64encode(b).rstrip(b"=").decode()


def _unb64(s: str) -> bytes:
    return base64.urlsafe_b64decode(s + "=" * (-len(s) % 4))


@dataclass(frozen=True)
class NodeRecord:
    nid: bytes
    nip: str
    ntyp: NodeType
    ipk: bytes
    hnid: bytes = field(default=b"", repr=False, compare=False)

    @classmethod
    def create(cls, nip: str, ntyp: NodeType, ipk: bytes) -> "NodeRecord":
        nid = compute_nid(nip, ntyp, ipk)
        return cls(nid, nip, NodeType(ntyp), ipk, h_digest(nid))

    def to_map(self) -> dict:
        return {"nid": _b64(self.nid), "nip": self.nip, "ntyp": self.ntyp.value, "ipk": _b64(self.ipk)}

    @classmethod
    def from_map(cls, m: dict) -> "NodeRecord":
        rec = cls.create(m["nip"], NodeType(m["ntyp"]), _unb64(m["ipk"]))
        if rec.nid != _unb64(m["nid"]):
            raise RegistryError("nid does not match record fields")
        return rec


class _Counted:
    """Heap key that counts comparisons (used by complexity tests)."""

    __slots__ = ("k", "stats")

    def __init__(self, k: int, stats: dict) -> None:
        self.k = k
        self.stats = stats

    def __lt__(self, other: "_Counted") -> bool:
        self.stats["comparisons"] += 1
        return self.k < other.k


def select_closest(x: bytes, records: Iterable[NodeRecord], q: int,
                   stats: dict | None = None) -> list[NodeRecord]:
    """The q records minimizing H(x) XOR H(nid); ties broken by nid ascending.

    Keeps a bounded max-heap, so the cost is O(|N| log q).
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    hx = int.from_bytes(h_digest(x), "big")
    heap: list = []
    if stats is not None:
        stats.setdefault("comparisons", 0)
    for rec in records:
        d = hx ^ int.from_bytes(rec.hnid, "big")
        key = -((d << 256) | int.from_bytes(rec.nid, "big"))
        item = (_Counted(key, stats) if stats is not None else key, rec.nid, rec)
        if len(heap) < q:
            heapq.heappush(heap, item)
        elif heap[0][0] < item[0]:
            heapq.heapreplace(heap, item)
    heap.sort(key=lambda it: it[0], reverse=True)
    return [it[2] for it in heap]


def set_digest_bytes(nodes: Iterable[NodeRecord | bytes]) -> bytes:
    """Canonical set encoding: member nids concatenated in ascending order."""
    nids = [n.nid if isinstance(n, NodeRecord) else n for n in nodes]
    return b"".join(sorted(nids))


class Registry:
    def __init__(self) -> None:
        self._entries: dict[bytes, NodeRecord] = {}
        self._by_type: dict[NodeType, tuple[NodeRecord, ...]] = {t: () for t in NodeType}
        self.version = 0
        self._lock = threading.Lock()

    def _reindex(self) -> None:
        for t in NodeType:
            self._by_type[t] = tuple(r for r in self._entries.values() if r.ntyp == t)

    def register_node(self, nip: str, ntyp: NodeType, ipk: bytes) -> NodeRecord:
        rec = NodeRecord.create(nip, ntyp, ipk)
        with self._lock:
            if rec.nid in self._entries:
                raise RegistryError("duplicate nid")
            self._entries[rec.nid] = rec
            self.version += 1
            self._reindex()
        return rec

    def revoke_node(self, nid: bytes) -> None:
        with self._lock:
            if nid not in self._entries:
                raise RegistryError("unknown nid")
            del self._entries[nid]
            self.version += 1
            self._reindex()

    def lookup(self, nid: bytes) -> NodeRecord | None:
        return self._entries.get(nid)

    def nodes(self, ntyp: NodeType | None = None) -> tuple[NodeRecord, ...]:
        if ntyp is None:
            return tuple(self._entries.values())
        return self._by_type[NodeType(ntyp)]

    def __len__(self) -> int:
        return len(self._entries)

    def get_nodes(self, x: bytes, q: int, ntyp: NodeType, stats: dict | None = None) -> list[NodeRecord]:
        return select_closest(x, self._by_type[NodeType(ntyp)], q, stats)

    def get_ev(self, cdt: bytes, n: int) -> list[NodeRecord]:
        return self.get_nodes(cdt, n, NodeType.EV)

    def get_ms(self, csk: bytes, m: int) -> list[NodeRecord]:
        return self.get_nodes(csk, m, NodeType.MS)

    # sync

    def export_snapshot(self) -> dict:
        with self._lock:
            recs = sorted(self._entries.values(), key=lambda r: r.nid)
            return {"version": self.version, "entries": [r.to_map() for r in recs]}

    def to_json(self) -> str:
        return json.dumps(self.export_snapshot(), sort_keys=True, separators=(",", ":"))

    def import_snapshot(self, snap: dict) -> bool:
        """Replace local state if the snapshot is newer. Returns True if applied."""
        recs = [NodeRecord.from_map(m) for m in snap["entries"]]
        with self._lock:
            if snap["version"] <= self.version and self._entries:
                return False
            self._entries = {r.nid: r for r in recs}
            self.version = snap["version"]
            self._reindex()
        return True

    @classmethod
    def from_snapshot(cls, snap: dict) -> "Registry":
        r = cls()
        r.import_snapshot(snap)
        return r


def log2_bound(n: int, q: int, c: float = 4.0) -> float:
    return c * n * max(1.0, math.log2(q))
