"""HTTP daemons hosting the role modules."""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

from sidecar.admin import Admin, AdminError
from sidecar.als import AlsReject, AuditLogServer
from sidecar.billing import MintError
from sidecar.crypto import pairing as pc
from sidecar.crypto.groupsig import GroupSigError
from sidecar.evaluator import EvalError, Evaluator, RotationLogEntry
from sidecar.logs import FeedbackEntry, MisbehaviorReport, from_canonical_json
from sidecar.msgstore import MessageStore, StoreError
from sidecar.net import wire
from sidecar.registry import NodeType, RegistryError

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20

Handler = Callable[[wire.WireMessage], wire.WireMessage]


def _role_handler(kind: str, fn: Callable[[Any], Any]) -> Handler:
    def handle(msg: wire.WireMessage) -> wire.WireMessage:
        try:
            return wire.to_wire(fn(wire.from_wire(msg)))
        except EvalError as exc:
            return wire.error_message(kind, exc.code, str(exc))
        except StoreError as exc:
            return wire.error_message(kind, exc.code, str(exc), exc.denial)
    return handle


def ev_routes(ev: Evaluator) -> dict[str, tuple[str, Handler]]:
    return {"/evaluate": ("evaluate", _role_handler("evaluate", ev.evaluate))}


def ms_routes(ms: MessageStore) -> dict[str, tuple[str, Handler]]:
    return {
        "/store": ("store", _role_handler("store", ms.store)),
        "/retrieve": ("retrieve", _role_handler("retrieve", ms.retrieve)),
    }


def admin_routes(admin: Admin) -> dict[str, tuple[str, Handler]]:
    def register(msg: wire.WireMessage) -> wire.WireMessage:
        b = msg.body
        try:
            if b["entity"] == "node":
                rec = admin.register_node(b["nip"], NodeType(b["ntyp"]), b["ipk"])
                return wire.WireMessage("register", wire.RESPONSE, {"nid": rec.nid, "gsk": b"", "gpk": b""})
            if b["entity"] == "provider":
                gsk, gpk = admin.register_provider(b["identity"], b["ipk"] or None)
                return wire.WireMessage("register", wire.RESPONSE,
                                        {"nid": b"", "gsk": gsk.to_bytes(), "gpk": gpk.to_bytes()})
        except (AdminError, RegistryError, ValueError) as exc:
            return wire.error_message("register", "rejected", str(exc))
        return wire.error_message("register", "bad-request", "entity must be node or provider")

    def mint(msg: wire.WireMessage) -> wire.WireMessage:
        b = msg.body
        try:
            ys = admin.clearinghouse.mint(b["provider"], b["cycle"], b["xs"], b["sigma"])
        except MintError as exc:
            return wire.error_message("mint", "rejected", str(exc))
        return wire.WireMessage("mint", wire.RESPONSE, {"ys": ys})

    def params(msg: wire.WireMessage) -> wire.WireMessage:
        return wire.WireMessage("params", wire.RESPONSE, {
            "gpk": admin.mgr.gpk_history[0].to_bytes(),
            "vk_b": pc.g2_to_bytes(admin.clearinghouse.vk_b),
            "cycle": admin.clearinghouse.keys.cycle_id,
            "revocations": [e.to_bytes() for e in admin.rl.group_entries],
        })

    def sync(msg: wire.WireMessage) -> wire.WireMessage:
        return wire.WireMessage("registry-sync", wire.RESPONSE, {"snapshot": admin.registry.export_snapshot()})

    return {
        "/register": ("register", register),
        "/mint": ("mint", mint),
        "/params": ("params", params),
        "/registry": ("registry-sync", sync),
    }


def decode_als_entry(list_name: str, data: dict) -> Any:
    m = from_canonical_json(json.dumps(data))
    if list_name == "rotation":
        return RotationLogEntry(m["node"], m["i"], m["pk"], m["ts"], m["sig"], m.get("kind", "rotate"))
    if list_name in ("cidcomp", "retcomp"):
        return MisbehaviorReport(m["kind"], m["target"], m["reason"], m["evidence"])
    return FeedbackEntry.from_map(m)


def als_routes(als: AuditLogServer) -> dict[str, tuple[str, Handler]]:
    def append(msg: wire.WireMessage) -> wire.WireMessage:
        try:
            entry = decode_als_entry(msg.body["list"], msg.body["entry"])
            ce = als.append(msg.body["list"], entry)
        except AlsReject as exc:
            return wire.error_message("als-append", exc.code, str(exc))
        except (KeyError, TypeError, ValueError, GroupSigError) as exc:
            return wire.error_message("als-append", "bad-request", str(exc))
        return wire.WireMessage("als-append", wire.RESPONSE, {"seq": ce.seq, "digest": ce.digest})
    return {"/als": ("als-append", append)}


class _HttpHandler(BaseHTTPRequestHandler):
    server: "Daemon._Server"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, code: int, body: bytes, ctype: str = "application/json") -> None:
        self.send_response(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        d = self.server.daemon_ref
        if self.path == "/health":
            self._send(200, json.dumps({"status": "up", "role": d.role}).encode())
        elif self.path == "/registry" and "/registry" in d.routes:
            _, h = d.routes["/registry"]
            out = h(wire.WireMessage("registry-sync", wire.REQUEST, {"version": 0}))
            self._send(200, wire.encode_json(out))
        else:
            self._send(404, b'{"error":"not found"}')

    def do_POST(self) -> None:
        d = self.server.daemon_ref
        route = d.routes.get(self.path)
        if route is None:
            self._send(404, b'{"error":"not found"}')
            return
        kind, handler = route
        binary = self.headers.get("Content-Type", "") == "application/octet-stream"
        try:
            n = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            n = -1
        if not 0 <= n <= MAX_BODY:
            self._reply(400, wire.error_message(kind, "bad-request", "bad length"), binary)
            return
        raw = self.rfile.read(n)
        try:
            msg = wire.decode(raw, binary)
            if msg.kind != kind or msg.status != wire.REQUEST:
                raise wire.WireError("message kind does not match endpoint")
            out = handler(msg)
            code = 200
        except (wire.WireError, pc.DecodeError) as exc:
            out, code = wire.error_message(kind, "bad-request", str(exc)), 400
        except Exception as exc:  # keep the daemon alive on handler bugs
            log.exception("handler failure on %s", self.path)
            out, code = wire.error_message(kind, "internal", type(exc).__name__), 500
        self._reply(code, out, binary)

    def _reply(self, code: int, msg: wire.WireMessage, binary: bool) -> None:
        ctype = "application/octet-stream" if binary else "application/json"
        self._send(code, wire.encode(msg, binary), ctype)


class Daemon:
    """One HTTP server plus periodic background tasks."""

    class _Server(ThreadingHTTPServer):
        daemon_threads = False
        block_on_close = True
        allow_reuse_address = True
        daemon_ref: "Daemon"

    def __init__(self, role: str, host: str, port: int,
                 routes: dict[str, tuple[str, Handler]],
                 tasks: list[tuple[float, Callable[[], None]]] | None = None) -> None:
        self.role = role
        self.routes = routes
        self.tasks = tasks or []
        self._httpd = self._Server((host, port), _HttpHandler)
        self._httpd.daemon_ref = self
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        h, p = self.address
        return f"http://{h}:{p}"

    def _loop(self, interval: float, fn: Callable[[], None]) -> None:
        while not self._stop.wait(interval):
            try:
                fn()
            except Exception:
                log.exception("background task failed")

    def start(self) -> "Daemon":
        t = threading.Thread(target=self._httpd.serve_forever, name=f"{self.role}-http", daemon=True)
        t.start()
        self._threads.append(t)
        for interval, fn in self.tasks:
            bt = threading.Thread(target=self._loop, args=(interval, fn), daemon=True)
            bt.start()
            self._threads.append(bt)
        return self

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.wait(1.0):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        """Stop accepting requests and wait for in-flight ones to finish."""
        self._stop.set()
        self._httpd.shutdown()
        self._httpd.server_close()


class AsyncSink:
    """Background delivery so logging never sits on the request path."""

    def __init__(self, deliver: Callable[[Any], None], retries: int = 3) -> None:
        self._q: queue.Queue = queue.Queue()
        self._deliver = deliver
        self._retries = retries
        self.dropped = 0
        self._t = threading.Thread(target=self._run, daemon=True)
        self._t.start()

    def __call__(self, item: Any) -> None:
        self._q.put(item)

    def _run(self) -> None:
        while True:
            item = self._q.get()
            for attempt in range(self._retries):
                try:
                    self._deliver(item)
                    break
                except Exception:
                    time.sleep(0.05 * (attempt + 1))
            else:
                self.dropped += 1
            self._q.task_done()

    def flush(self, timeout: float = 5.0) -> bool:
        end = time.time() + timeout
        while self._q.unfinished_tasks and time.time() < end:
            time.sleep(0.01)
        return not self._q.unfinished_tasks
