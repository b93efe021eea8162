"""Evaluate throughput of a live EV daemon over HTTP on localhost."""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from sidecar import cli
from sidecar.billing import mint_tokens
from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf
from sidecar.crypto.groupsig import gsign
from sidecar.crypto.sig import NodeKey
from sidecar.evaluator import EvalRequest, eval_hreq
from sidecar.net import wire
from sidecar.net.transport import TransportError, post
from sidecar.registry import set_digest_bytes


@dataclass
class ThroughputResult:
    requests: int
    errors: int
    elapsed_s: float
    concurrency: int

    @property
    def rps(self) -> float:
        return self.requests / self.elapsed_s if self.elapsed_s else 0.0


def evaluate_throughput(requests: int = 1000, concurrency: int = 8, seed: int = 0) -> ThroughputResult:
    """Drive one EV daemon with pre-signed requests; client-side signing is not timed."""
    rng = random.Random(seed)
    base = dict(cli.NODE_DEFAULTS, port=0, seed=seed, params_refresh=3600.0)
    admin = cli.build_daemon("admin", base).start()
    ev = cli.build_daemon("ev", dict(base, admin_url=admin.url, als_url=admin.url)).start()
    try:
        isk = NodeKey.generate(rng)
        gsk, _ = admin.admin.register_provider("bench", isk.public)
        toks = mint_tokens("bench", isk, requests, admin.admin.clearinghouse, rng)
        s_ev = set_digest_bytes([ev.node.nid])
        msgs = []
        for tok in toks:
            x = pc.g1_to_bytes(voprf.blind(rng.randbytes(32), rng).x)
            i_k = rng.randrange(ev.node.schedule.S)
            hreq = eval_hreq(x, i_k, tok.t0, tok.t1_bytes, s_ev)
            msgs.append(wire.to_wire(EvalRequest(i_k, x, tok.t0, tok.t1_bytes, s_ev, gsign(gsk, hreq, rng))))

        def send(msg) -> bool:
            try:
                return post(ev.url, "/evaluate", msg, timeout=30.0).status == wire.RESPONSE
            except TransportError:
                return False

        t = time.perf_counter()
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            ok = sum(pool.map(send, msgs))
        elapsed = time.perf_counter() - t
        ev.feedback.flush()
    finally:
        ev.stop()
        admin.stop()
    return ThroughputResult(requests, requests - ok, elapsed, concurrency)
