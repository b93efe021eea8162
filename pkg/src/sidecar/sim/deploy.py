"""Build a complete in-process deployment: admin, audit log, nodes and providers."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any

from sidecar.admin import Admin
from sidecar.als import AuditLogServer
from sidecar.billing import mint_tokens
from sidecar.clock import ManualClock, SkewedClock
from sidecar.crypto.sig import NodeKey
from sidecar.evaluator import DEFAULT_EPS_T, DEFAULT_S, DEFAULT_T_ROT, Evaluator
from sidecar.msgstore import DEFAULT_T_MAX, MessageStore
from sidecar.net.transport import LocalNetwork
from sidecar.provider import Provider, TokenWallet
from sidecar.registry import NodeRecord, NodeType


@dataclass
class DeployConfig:
    N: int = 10
    M: int = 10
    n: int = 3
    m: int = 3
    S: int = DEFAULT_S
    t_rot: float = DEFAULT_T_ROT
    eps_t: float = DEFAULT_EPS_T
    t_max: float = DEFAULT_T_MAX
    audit: bool = True
    skew: dict[int, float] = field(default_factory=dict)  # EV index -> clock offset


class Deployment:
    def __init__(self, cfg: DeployConfig | None = None, seed: int | None = 0,
                 clock: Any | None = None) -> None:
        self.cfg = cfg or DeployConfig()
        self.rng = random.Random(seed) if seed is not None else None
        self.clock = clock or ManualClock()
        self.admin = Admin(self.rng)
        self.als = AuditLogServer(self.admin.registry, self.admin.gpk_history, self.clock,
                                  t_max=self.cfg.t_max, t_rot=self.cfg.t_rot)
        self.net = LocalNetwork(als_sink=self._als_report)
        self.evs: dict[bytes, Evaluator] = {}
        self.mss: dict[bytes, MessageStore] = {}
        self.records: dict[bytes, NodeRecord] = {}
        self.node_keys: dict[bytes, NodeKey] = {}
        self.trust = self.admin.trust_anchors()
        self.als_errors: list[Exception] = []
        for j in range(self.cfg.N):
            self.add_ev(f"ev{j}.sidecar.test:8443", j)
        for j in range(self.cfg.M):
            self.add_ms(f"ms{j}.sidecar.test:8443")
        self.providers: dict[str, Provider] = {}

    # ------------------------------------------------------------ sinks

    def _sink(self, kind: str):
        if not self.cfg.audit:
            return None

        def push(entry):
            try:
                self.als.append(kind if kind != "feedback" else entry.kind, entry)
            except Exception as exc:
                self.als_errors.append(exc)
        return push

    def _als_report(self, kind: str, payload):
        return self.als.append(kind, payload)

    def _report_sink(self, report):
        if self.cfg.audit:
            try:
                self.als.append(report.kind, report)
            except Exception as exc:
                self.als_errors.append(exc)

    # ------------------------------------------------------------ nodes

    def add_ev(self, nip: str, j: int = 0) -> Evaluator:
        key = NodeKey.generate(self.rng)
        rec = self.admin.register_node(nip, NodeType.EV, key.public)
        clock = self.clock
        if j in self.cfg.skew:
            clock = SkewedClock(self.clock, self.cfg.skew[j])
        ev = Evaluator(rec.nid, key, self.trust, clock, self.cfg.S, self.cfg.t_rot,
                       self.cfg.eps_t, feedback=self._sink("feedback"),
                       rotation_log=self._sink("rotation"), rng=self.rng)
        self.evs[rec.nid] = ev
        self.records[rec.nid] = rec
        self.node_keys[rec.nid] = key
        self.net.add(rec.nid, ev)
        return ev

    def add_ms(self, nip: str) -> MessageStore:
        key = NodeKey.generate(self.rng)
        rec = self.admin.register_node(nip, NodeType.MS, key.public)
        ms = MessageStore(rec.nid, key, self.trust, self.clock, self.cfg.t_max,
                          feedback=self._sink("feedback"))
        self.mss[rec.nid] = ms
        self.records[rec.nid] = rec
        self.node_keys[rec.nid] = key
        self.net.add(rec.nid, ms)
        return ms

    def replace_handler(self, nid: bytes, handler: Any) -> None:
        self.net.add(nid, handler)

    def handler(self, nid: bytes) -> Any:
        return self.net.handlers[nid]

    # ------------------------------------------------------------ providers

    def new_provider(self, identity: str, tokens: int = 16, refill: int = 64) -> Provider:
        isk = NodeKey.generate(self.rng)
        gsk, _ = self.admin.register_provider(identity, isk.public)
        ch = self.admin.clearinghouse

        def mint(count: int):
            return mint_tokens(identity, isk, count, ch, self.rng)

        wallet = TokenWallet(refill=mint, batch=refill)
        if tokens:
            wallet.add(mint(tokens))
        p = Provider(identity, gsk, self.admin.registry, self.net, self.clock,
                     self.cfg.n, self.cfg.m, self.cfg.S, wallet, self.rng,
                     report_sink=self._report_sink)
        self.providers[identity] = p
        return p

    def revoke_provider(self, identity: str) -> None:
        entries = self.admin.revoke_provider(identity)
        self.trust.apply_revocations(entries)
        for name, p in self.providers.items():
            if name != identity:
                p.apply_revocations(entries)

    # ------------------------------------------------------------ time

    def tick(self) -> None:
        for ev in self.evs.values():
            ev.tick()
        for ms in self.mss.values():
            ms.expire_sweep()

    def advance(self, dt: float, step: float | None = None) -> None:
        """Move virtual time forward, running node timers at ``step`` granularity."""
        step = step or min(dt, 1.0)
        left = dt
        while left > 1e-9:
            d = min(step, left)
            self.clock.advance(d)
            left -= d
            self.tick()
