"""Provider interconnection graphs and call paths."""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

DEFAULT_DEPLOY_FRACTION = 0.5596
SIP, TDM = "SIP", "TDM"


@dataclass
class CallPath:
    providers: list[int]
    links: list[str]  # one per hop

    @property
    def needs_oob(self) -> bool:
        return TDM in self.links


@dataclass
class Topology:
    graph: nx.Graph
    deployed: set[int]

    def link(self, a: int, b: int) -> str:
        return self.graph.edges[a, b]["link"]

    def sample_path(self, rng: np.random.Generator) -> CallPath:
        nodes = list(self.graph.nodes)
        while True:
            src, dst = (int(v) for v in rng.choice(nodes, size=2, replace=False))
            try:
                path = nx.shortest_path(self.graph, src, dst)
            except nx.NetworkXNoPath:
                continue
            return CallPath(path, [self.link(a, b) for a, b in zip(path, path[1:])])

    def sample_oob_path(self, rng: np.random.Generator, max_tries: int = 10000) -> CallPath:
        """A path whose endpoints both run attestation and that crosses a TDM hop."""
        for _ in range(max_tries):
            p = self.sample_path(rng)
            if p.needs_oob and p.providers[0] in self.deployed and p.providers[-1] in self.deployed:
                return p
        raise RuntimeError("topology yields no out-of-band paths")

    def oob_fraction(self, rng: np.random.Generator, samples: int = 1000) -> float:
        hits = 0
        for _ in range(samples):
            p = self.sample_path(rng)
            hits += p.needs_oob and p.providers[0] in self.deployed and p.providers[-1] in self.deployed
        return hits / samples


def gen_topology(providers: int, deploy_fraction: float = DEFAULT_DEPLOY_FRACTION,
                 seed: int = 0, attach: int = 2, tdm_prob: float = 0.3) -> Topology:
    """Preferential-attachment graph; deployment sampled degree-weighted without replacement."""
    if providers < 2:
        raise ValueError("need at least two providers")
    rng = np.random.default_rng(seed)
    g = nx.barabasi_albert_graph(providers, min(attach, providers - 1), seed=int(rng.integers(2**31)))
    for a, b in sorted(g.edges):
        g.edges[a, b]["link"] = TDM if rng.random() < tdm_prob else SIP
    nodes = np.array(sorted(g.nodes))
    deg = np.array([g.degree(v) for v in nodes], dtype=float)
    k = int(round(deploy_fraction * providers))
    chosen = rng.choice(nodes, size=k, replace=False, p=deg / deg.sum()) if k else []
    return Topology(g, {int(v) for v in chosen})
