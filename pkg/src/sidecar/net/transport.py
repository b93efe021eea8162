"""Transports that deliver role requests to nodes.

``LocalNetwork`` calls handler objects in-process (used by tests and the
simulator); ``HttpNetwork`` speaks the wire format to remote daemons.
"""

from __future__ import annotations

import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable

from sidecar.registry import NodeRecord

KINDS = ("evaluate", "store", "retrieve")


class TransportError(Exception):
    def __init__(self, code: str = "unreachable", msg: str = "") -> None:
        super().__init__(msg or code)
        self.code = code


@dataclass
class CallTrace:
    kind: str
    node: bytes
    elapsed: float
    ok: bool


@dataclass
class LocalNetwork:
    """In-process delivery. Handlers are Evaluator / MessageStore (or fault wrappers)."""

    handlers: dict[bytes, Any] = field(default_factory=dict)
    down: set[bytes] = field(default_factory=set)
    trace: list[CallTrace] | None = None
    counts: Counter = field(default_factory=Counter)
    als_sink: Callable[[str, Any], Any] | None = None

    def add(self, nid: bytes, handler: Any) -> None:
        self.handlers[nid] = handler

    def request(self, node: NodeRecord, kind: str, req: Any) -> Any:
        if kind not in KINDS:
            raise ValueError(f"unknown request kind {kind}")
        self.counts[node.nid] += 1
        h = self.handlers.get(node.nid)
        if h is None or node.nid in self.down:
            raise TransportError("unreachable")
        t = time.perf_counter()
        ok = False
        try:
            out = getattr(h, kind)(req)
            ok = True
            return out
        finally:
            if self.trace is not None:
                self.trace.append(CallTrace(kind, node.nid, time.perf_counter() - t, ok))

    def fanout(self, calls: list[tuple[NodeRecord, str, Any]]) -> list[Any]:
        out: list[Any] = []
        for node, kind, req in calls:
            try:
                out.append(self.request(node, kind, req))
            except Exception as exc:  # failures are data to the caller
                out.append(exc)
        return out

    def report(self, kind: str, payload: Any) -> Any:
        if self.als_sink is not None:
            return self.als_sink(kind, payload)
        return None


class ThreadedFanout:
    """Mixin-style helper: run a blocking request function over a pool with a deadline."""

    def __init__(self, request: Callable[[NodeRecord, str, Any], Any], timeout: float = 1.0,
                 workers: int = 16) -> None:
        self._request = request
        self.timeout = timeout
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def fanout(self, calls: list[tuple[NodeRecord, str, Any]]) -> list[Any]:
        futs = [self._pool.submit(self._request, n, k, r) for n, k, r in calls]
        wait(futs, timeout=self.timeout)
        out: list[Any] = []
        for f in futs:
            if not f.done():
                f.cancel()
                out.append(TransportError("timeout"))
                continue
            exc = f.exception()
            out.append(exc if exc is not None else f.result())
        return out

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)


class HttpNetwork(ThreadedFanout):
    """Delivers role requests to daemons over HTTP using the canonical JSON encoding."""

    def __init__(self, timeout: float = 1.0, workers: int = 16, scheme: str = "http") -> None:
        super().__init__(self.request, timeout, workers)
        self.scheme = scheme

    def request(self, node: NodeRecord, kind: str, req: Any) -> Any:
        from sidecar.net import wire

        if kind not in KINDS:
            raise ValueError(f"unknown request kind {kind}")
        msg = post(f"{self.scheme}://{node.nip}", "/" + kind, wire.to_wire(req), self.timeout)
        if msg.status == wire.ERROR:
            raise wire.error_from_wire(msg)
        return wire.from_wire(msg)


def post(base_url: str, path: str, msg: Any, timeout: float = 5.0) -> Any:
    """POST one wire message and decode the reply (errors come back as messages)."""
    import urllib.error
    import urllib.request

    from sidecar.net import wire

    data = wire.encode_json(msg)
    rq = urllib.request.Request(base_url.rstrip("/") + path, data=data, method="POST",
                                headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(rq, timeout=timeout) as resp:
            body = resp.read()
    except urllib.error.HTTPError as exc:
        body = exc.read()
        if not body:
            raise TransportError("http-error", str(exc)) from exc
    except (urllib.error.URLError, OSError) as exc:
        if "timed out" in str(exc):
            raise TransportError("timeout", str(exc)) from exc
        raise TransportError("unreachable", str(exc)) from exc
    try:
        return wire.decode_json(body)
    except wire.WireError as exc:
        raise TransportError("bad-response", str(exc)) from exc


def get(base_url: str, path: str, timeout: float = 5.0) -> bytes:
    import urllib.error
    import urllib.request

    try:
        with urllib.request.urlopen(base_url.rstrip("/") + path, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError("unreachable", str(exc)) from exc
