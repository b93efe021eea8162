"""End-to-end call scenarios over an in-process deployment."""

from __future__ import annotations

import os
import random
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from sidecar.billing import reconcile
from sidecar.provider import Provider, ProviderError
from sidecar.sim.deploy import DeployConfig, Deployment
from sidecar.sim.faults import DroppingMS, WrongKeyEV
from sidecar.sim.topology import Topology, gen_topology


@dataclass
class FaultConfig:
    wrong_key_evs: list[int] = field(default_factory=list)  # indices into the EV list
    dropping_ms: list[int] = field(default_factory=list)
    token_reuse: float = 0.0  # chance a publisher re-offers its previous token


@dataclass
class ScenarioConfig:
    deploy: DeployConfig = field(default_factory=DeployConfig)
    faults: FaultConfig = field(default_factory=FaultConfig)
    retrieve_delay: float = 0.5
    call_gap: float = 1.0
    rtt: float = 0.0  # seconds per sequential network round trip, added to the crypto time


@dataclass
class CallOutcome:
    src: str
    dst: str
    publisher: str
    retriever: str
    success: bool
    error: str
    crypto_s: float
    latency_s: float


@dataclass
class ScenarioResult:
    calls: list[CallOutcome]
    node_requests: dict[bytes, int]
    token_conflicts: list
    disputes: list[tuple[str, bytes, str]]  # (list, accused nid, verdict)
    faulty_nodes: set[bytes]
    oob_paths: int

    @property
    def success_rate(self) -> float:
        return sum(c.success for c in self.calls) / len(self.calls) if self.calls else 0.0

    def misattributions(self) -> int:
        return sum(1 for _, nid, v in self.disputes if v == "node-dishonest" and nid not in self.faulty_nodes)


class _TimedNetwork:
    """Wraps LocalNetwork so each fan-out is charged as if run in parallel."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.saved = 0.0  # sequential handler time minus the slowest handler, per fan-out
        self.rounds = 0

    def fanout(self, calls):
        times = []
        out = []
        for node, kind, req in calls:
            t = time.perf_counter()
            try:
                out.append(self.inner.request(node, kind, req))
            except Exception as exc:
                out.append(exc)
            times.append(time.perf_counter() - t)
        if times:
            self.saved += sum(times) - max(times)
        self.rounds += 1
        return out

    def __getattr__(self, name):
        return getattr(self.inner, name)


def _number(rng: random.Random) -> str:
    return "+1" + "".join(str(rng.randrange(10)) for _ in range(10))


def run_scenario(topology: Topology | None, calls: int, cfg: ScenarioConfig | None = None,
                 seed: int = 0) -> ScenarioResult:
    cfg = cfg or ScenarioConfig()
    topology = topology or gen_topology(20, seed=seed)
    rng = random.Random(seed)
    nrng = np.random.default_rng(seed)
    dep = Deployment(cfg.deploy, seed=seed)
    net = _TimedNetwork(dep.net)

    faulty: set[bytes] = set()
    ev_ids = list(dep.evs)
    ms_ids = list(dep.mss)
    for j in cfg.faults.wrong_key_evs:
        nid = ev_ids[j]
        dep.replace_handler(nid, WrongKeyEV(dep.evs[nid], dep.rng))
        faulty.add(nid)
    for j in cfg.faults.dropping_ms:
        nid = ms_ids[j]
        dep.replace_handler(nid, DroppingMS(dep.mss[nid]))
        faulty.add(nid)

    providers: dict[int, Provider] = {}

    def provider(v: int) -> Provider:
        if v not in providers:
            p = dep.new_provider(f"carrier-{v}")
            p.net = net
            providers[v] = p
        return providers[v]

    outcomes = []
    last_token: dict[str, object] = {}
    for _ in range(calls):
        path = topology.sample_oob_path(nrng)
        pub, ret = provider(path.providers[0]), provider(path.providers[-1])
        src, dst = _number(rng), _number(rng)
        payload = rng.randbytes(96)
        if cfg.faults.token_reuse and pub.identity in last_token and rng.random() < cfg.faults.token_reuse:
            pub.wallet.add([last_token[pub.identity]])
        saved0, rounds0 = net.saved, net.rounds
        elapsed = 0.0
        err = ""
        got = None
        try:
            call = pub.derive_cdt(src, dst)
            last_token[pub.identity] = pub.wallet.for_call(call.cdt)
            t = time.perf_counter()
            pub.publish(src, dst, payload)
            elapsed += time.perf_counter() - t
            dep.advance(cfg.retrieve_delay)
            t = time.perf_counter()
            got = ret.retrieve(src, dst)
            elapsed += time.perf_counter() - t
        except ProviderError as exc:
            err = type(exc).__name__
        crypto = max(0.0, elapsed - (net.saved - saved0))
        outcomes.append(CallOutcome(src, dst, pub.identity, ret.identity, got == payload, err,
                                    crypto, crypto + cfg.rtt * (net.rounds - rounds0)))
        dep.advance(cfg.call_gap)

    disputes = []
    for kind in ("cidcomp", "retcomp"):
        for report, verdict in dep.als.resolve_all(kind):
            disputes.append((kind, report.target, verdict))
    conflicts = reconcile(dep.als.feedback()).conflicts if cfg.deploy.audit else []
    return ScenarioResult(outcomes, dict(Counter(dep.net.counts)), conflicts, disputes, faulty, calls)



def _shard(args) -> ScenarioResult:
    topology, calls, cfg, seed = args
    return run_scenario(topology, calls, cfg, seed)


def run_scenario_parallel(topology: Topology | None, calls: int, cfg: ScenarioConfig | None = None,
                          seed: int = 0, workers: int | None = None) -> ScenarioResult:
    """Split calls over independent deployments, one per worker process."""
    workers = max(1, workers or os.cpu_count() or 1)
    if workers == 1:
        return run_scenario(topology, calls, cfg, seed)
    topology = topology or gen_topology(20, seed=seed)
    sizes = [calls // workers + (k < calls % workers) for k in range(workers)]
    jobs = [(topology, c, cfg, seed * 1000 + k) for k, c in enumerate(sizes) if c]
    with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
        parts = list(pool.map(_shard, jobs))
    merged = ScenarioResult([], {}, [], [], set(), 0)
    for r in parts:
        merged.calls.extend(r.calls)
        merged.node_requests.update(r.node_requests)
        merged.token_conflicts.extend(r.token_conflicts)
        merged.disputes.extend(r.disputes)
        merged.faulty_nodes |= r.faulty_nodes
        merged.oob_paths += r.oob_paths
    return merged
