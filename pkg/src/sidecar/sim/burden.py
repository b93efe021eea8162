"""Per-node request load: content-addressed selection vs. broadcast republishing."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from sidecar.crypto import pairing as pc
from sidecar.registry import NodeType, Registry


@dataclass
class BurdenResult:
    Q: int
    n: int
    m: int
    calls: int
    sidecar_counts: list[int]  # requests per operator over all calls
    broadcast_counts: list[int]
    republishes: list[int]  # per call

    @property
    def sidecar_mean(self) -> float:
        """Mean requests per node per call."""
        return sum(self.sidecar_counts) / (self.Q * self.calls)

    @property
    def broadcast_mean(self) -> float:
        return sum(self.broadcast_counts) / (self.Q * self.calls)

    @property
    def republishes_per_call(self) -> float:
        return sum(self.republishes) / self.calls

    @property
    def expected_sidecar(self) -> float:
        return 2 * (self.n + self.m) / self.Q


def _operator_registry(Q: int, n: int, m: int) -> tuple[Registry, dict[bytes, int]]:
    """Q operators, each running enough EV and MS instances for a full selection."""
    reg = Registry()
    owner: dict[bytes, int] = {}
    v = max(1, math.ceil(max(n, m) / Q))
    for op in range(Q):
        for i in range(v):
            for ntyp in (NodeType.EV, NodeType.MS):
                ipk = pc.h_digest(b"op", op.to_bytes(4, "big"), i.to_bytes(4, "big"), ntyp.value.encode())
                rec = reg.register_node(f"op{op}-{i}.{ntyp.value.lower()}.test:8443", ntyp, ipk)
                owner[rec.nid] = op
    return reg, owner


def baseline_burden(Q: int, n: int = 3, m: int = 3, calls: int = 10_000, seed: int = 0) -> BurdenResult:
    if Q < 1:
        raise ValueError("Q must be at least 1")
    rng = random.Random(seed)
    reg, owner = _operator_registry(Q, n, m)
    side = [0] * Q
    bcast = [0] * Q
    repub = []
    for _ in range(calls):
        cdt = rng.randbytes(pc.DIGEST_SIZE)
        csk = rng.randbytes(pc.DIGEST_SIZE)
        evs = reg.get_ev(cdt, n)
        mss = reg.get_ms(csk, m)
        for _side in range(2):  # publisher, then retriever, hit the same sets
            for rec in (*evs, *mss):
                side[owner[rec.nid]] += 1
        # broadcast: publish to one CPS, which pushes to every other, retrieve from one
        home = rng.randrange(Q)
        bcast[home] += 1
        pushed = 0
        for op in range(Q):
            if op != home:
                bcast[op] += 1
                pushed += 1
        repub.append(pushed)
        bcast[rng.randrange(Q)] += 1
    return BurdenResult(Q, n, m, calls, side, bcast, repub)
