"""Public parameters every node tracks: current gpk, revocations and billing key."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from pymcl import G2

from sidecar.crypto.groupsig import GroupPublicKey, RevocationEntry, next_gpk


@dataclass
class TrustAnchors:
    gpk: GroupPublicKey
    vk_b: G2
    revocations: list[RevocationEntry] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def apply_revocations(self, entries: list[RevocationEntry]) -> int:
        """Advance the gpk through any entries newer than the current epoch."""
        applied = 0
        with self._lock:
            for e in sorted(entries, key=lambda e: e.epoch):
                if e.epoch == self.gpk.epoch + 1:
                    self.gpk = next_gpk(self.gpk, e)
                    self.revocations.append(e)
                    applied += 1
        return applied

    def set_billing_key(self, vk_b: G2) -> None:
        self.vk_b = vk_b
