"""Admin: group manager, registry authority and revocation list.

The clearinghouse and the audit log server live in their own modules; a
reference deployment hosts all three in one process.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field

from sidecar.billing import Clearinghouse
from sidecar.crypto.groupsig import (
    GroupMemberKey,
    GroupPublicKey,
    ManagerState,
    RevocationEntry,
    RevokedError,
)
from sidecar.registry import NodeRecord, NodeType, Registry
from sidecar.trust import TrustAnchors


class AdminError(Exception):
    pass


@dataclass
class RevocationList:
    providers: list[str] = field(default_factory=list)
    nodes: list[bytes] = field(default_factory=list)
    group_entries: list[RevocationEntry] = field(default_factory=list)
    version: int = 0

    def entries_after(self, epoch: int) -> list[RevocationEntry]:
        return [e for e in self.group_entries if e.epoch > epoch]


class Admin:
    def __init__(self, rng: random.Random | None = None,
                 clearinghouse: Clearinghouse | None = None) -> None:
        self.mgr = ManagerState(rng)
        self.registry = Registry()
        self.clearinghouse = clearinghouse or Clearinghouse(rng)
        self.rl = RevocationList()
        self._lock = threading.Lock()

    @property
    def gpk(self) -> GroupPublicKey:
        return self.mgr.gpk

    def gpk_history(self) -> list[GroupPublicKey]:
        return list(self.mgr.gpk_history)

    def trust_anchors(self) -> TrustAnchors:
        """A fresh node-side view of the current public parameters."""
        return TrustAnchors(self.mgr.gpk, self.clearinghouse.vk_b, list(self.rl.group_entries))

    def register_provider(self, identity: str, ipk: bytes | None = None) -> tuple[GroupMemberKey, GroupPublicKey]:
        if identity in self.rl.providers:
            raise AdminError(f"{identity} is revoked")
        try:
            gsk = self.mgr.join(identity)
        except RevokedError as exc:
            raise AdminError(str(exc)) from exc
        if ipk is not None:
            self.clearinghouse.register_provider(identity, ipk)
        return gsk, self.mgr.gpk

    def register_node(self, nip: str, ntyp: NodeType, ipk: bytes) -> NodeRecord:
        if any(n == NodeRecord.create(nip, ntyp, ipk).nid for n in self.rl.nodes):
            raise AdminError("node is revoked")
        return self.registry.register_node(nip, ntyp, ipk)

    def revoke_provider(self, identity: str) -> list[RevocationEntry]:
        with self._lock:
            entries = self.mgr.revoke(identity)
            self.rl.providers.append(identity)
            self.rl.group_entries.extend(entries)
            self.rl.version += 1
            return entries

    def revoke_node(self, nid: bytes) -> None:
        with self._lock:
            self.registry.revoke_node(nid)
            self.rl.nodes.append(nid)
            self.rl.version += 1
