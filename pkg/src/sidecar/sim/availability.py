"""Record retrievability when each store is independently up with probability p."""

from __future__ import annotations

import numpy as np

from sidecar.crypto import pairing as pc
from sidecar.registry import NodeType, Registry


def retrievability(p: float, m: int = 3, M: int = 10, trials: int = 100_000, seed: int = 0) -> float:
    """Fraction of trials in which at least one of the record's m stores answers."""
    rng = np.random.default_rng(seed)
    reg = Registry()
    nids = []
    for j in range(M):
        rec = reg.register_node(f"ms{j}.avail.test:8443", NodeType.MS, pc.h_digest(b"avail", bytes([j])))
        nids.append(rec.nid)
    pos = {nid: j for j, nid in enumerate(nids)}
    up = rng.random((trials, M)) < p
    keys = rng.bytes(trials * pc.DIGEST_SIZE)
    hits = 0
    for t in range(trials):
        csk = keys[t * pc.DIGEST_SIZE:(t + 1) * pc.DIGEST_SIZE]
        hits += any(up[t, pos[r.nid]] for r in reg.get_ms(csk, m))
    return hits / trials


def expected_retrievability(p: float, m: int = 3) -> float:
    return 1 - (1 - p) ** m
