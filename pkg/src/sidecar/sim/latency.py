"""Crypto-only latency profile over an (n, m) grid.

Each protocol stage is timed on its own against in-process nodes, with
fan-outs charged as if the nodes ran in parallel (the slowest handler
counts, the rest do not). A call is then assembled from one sample of
each stage: publisher CSG(n), publish(m), retriever CSG(n), retrieve(m).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from sidecar.provider import PUBLISH, RETRIEVE
from sidecar.sim.deploy import DeployConfig, Deployment
from sidecar.sim.scenario import _TimedNetwork


@dataclass
class StagePools:
    csg: dict[int, np.ndarray]
    pub: dict[int, np.ndarray]
    ret: dict[int, np.ndarray]


@dataclass
class LatencyCell:
    n: int
    m: int
    median_ms: float
    samples: int


def _timed(net: _TimedNetwork, fn) -> float:
    saved = net.saved
    t = time.perf_counter()
    fn()
    return time.perf_counter() - t - (net.saved - saved)


def measure_stages(ns: list[int], ms: list[int], samples: int = 500, seed: int = 0) -> StagePools:
    size = max(max(ns), max(ms), 10)
    dep = Deployment(DeployConfig(N=size, M=size, audit=False), seed=seed)
    p = dep.new_provider("bench", tokens=1)
    net = _TimedNetwork(dep.net)
    p.net = net
    tok = p.wallet.for_call(b"bench")
    # ledgers are cleared between samples so one token can be reused; the spent
    # check is a dictionary lookup and does not affect the timing
    nodes = [*dep.evs.values(), *dep.mss.values()]

    def reset() -> None:
        for node in nodes:
            node.ledger.reset()

    # grid values are interleaved within each round so slow drift in machine
    # speed spreads evenly over the cells instead of biasing one of them
    csg: dict[int, list[float]] = {n: [] for n in ns}
    for i in range(samples):
        for n in ns:
            p.n = n
            call = p.derive_cdt("+15550001111", f"+1555{i:07d}", ts=n)
            reset()
            mode = RETRIEVE if i % 2 else PUBLISH
            csg[n].append(_timed(net, lambda: p._gen_once(mode, call, tok)))

    pub: dict[int, list[float]] = {m: [] for m in ms}
    ret: dict[int, list[float]] = {m: [] for m in ms}
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        for m in ms:
            p.m = m
            csk = rng.bytes(32)
            reset()
            pub[m].append(_timed(net, lambda: p.publish_record(csk, b"\x00" * 96, tok)))
            reset()
            ret[m].append(_timed(net, lambda: p.retrieve_record([csk], tok)))
            for store in dep.mss.values():
                store.db.clear()
    arr = lambda d: {k: np.asarray(v) for k, v in d.items()}  # noqa: E731
    return StagePools(arr(csg), arr(pub), arr(ret))


def compose(pools: StagePools, n: int, m: int, samples: int = 500, seed: int = 0) -> np.ndarray:
    """Synthetic end-to-end crypto latencies (seconds) for one grid cell."""
    rng = np.random.default_rng([seed, n, m])

    def pick(a: np.ndarray) -> np.ndarray:
        return a[rng.integers(0, len(a), size=samples)]

    return pick(pools.csg[n]) + pick(pools.pub[m]) + pick(pools.csg[n]) + pick(pools.ret[m])


def latency_profile(ns: list[int] | None = None, ms: list[int] | None = None, samples: int = 500,
                    seed: int = 0, pools: StagePools | None = None) -> list[LatencyCell]:
    ns = ns or list(range(1, 7))
    ms = ms or list(range(1, 7))
    pools = pools or measure_stages(ns, ms, samples, seed)
    out = []
    for n in ns:
        for m in ms:
            v = compose(pools, n, m, samples, seed)
            out.append(LatencyCell(n, m, float(np.median(v)) * 1000, samples))
    return out
