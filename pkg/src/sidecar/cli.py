"""Command-line entry points: ``sidecar-node`` and the provider tool ``sidecar``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import yaml

from sidecar.admin import Admin
from sidecar.als import AuditLogServer
from sidecar.billing import BillingToken, finish_mint, prepare_mint
from sidecar.clock import SystemClock
from sidecar.crypto import pairing as pc
from sidecar.crypto.groupsig import GroupMemberKey, GroupPublicKey, RevocationEntry, next_gpk
from sidecar.crypto.sig import NodeKey
from sidecar.evaluator import DEFAULT_EPS_T, DEFAULT_S, DEFAULT_T_ROT, Evaluator
from sidecar.logs import b64, canonical_json, unb64
from sidecar.msgstore import DEFAULT_T_MAX, MessageStore
from sidecar.net import wire
from sidecar.net.server import AsyncSink, Daemon, admin_routes, als_routes, ev_routes, ms_routes
from sidecar.net.transport import HttpNetwork, TransportError, post
from sidecar.provider import PUBLISH, RETRIEVE, Provider, TokenWallet
from sidecar.registry import NodeType, Registry
from sidecar.trust import TrustAnchors

log = logging.getLogger("sidecar")

NODE_DEFAULTS: dict[str, Any] = {
    "host": "127.0.0.1",
    "port": 8440,
    "nip": None,
    "admin_url": "http://127.0.0.1:8440",
    "als_url": None,
    "key_file": None,
    "S": DEFAULT_S,
    "t_rot": DEFAULT_T_ROT,
    "eps_t": DEFAULT_EPS_T,
    "t_max": DEFAULT_T_MAX,
    "n": 3,
    "m": 3,
    "params_refresh": 10.0,
    "host_als": True,
    "seed": None,
}

PROVIDER_DEFAULTS: dict[str, Any] = {
    "identity": "provider",
    "admin_url": "http://127.0.0.1:8440",
    "als_url": None,
    "state_dir": "./provider-state",
    "n": 3,
    "m": 3,
    "S": DEFAULT_S,
    "timeout": 1.0,
}

ENV_OVERRIDES = {"SIDECAR_PORT": ("port", int), "SIDECAR_REGISTRY_URL": ("admin_url", str),
                 "SIDECAR_ALS_URL": ("als_url", str), "SIDECAR_HOST": ("host", str)}


def load_config(path: str | None, defaults: dict[str, Any]) -> dict[str, Any]:
    cfg = dict(defaults)
    if path:
        with open(path) as fh:
            cfg.update(yaml.safe_load(fh) or {})
    for env, (key, conv) in ENV_OVERRIDES.items():
        if env in os.environ and key in cfg:
            cfg[key] = conv(os.environ[env])
    if cfg.get("als_url") is None:
        cfg["als_url"] = cfg["admin_url"]
    return cfg


def load_or_create_key(path: str | None) -> NodeKey:
    if path is None:
        return NodeKey.generate()
    p = Path(path)
    if p.exists():
        return NodeKey.from_seed(bytes.fromhex(p.read_text().strip()))
    key = NodeKey.generate()
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(key.seed.hex())
    p.chmod(0o600)
    return key


class AdminClient:
    """Client for the admin, clearinghouse and audit-log endpoints."""

    def __init__(self, admin_url: str, als_url: str | None = None, timeout: float = 5.0) -> None:
        self.admin_url = admin_url
        self.als_url = als_url or admin_url
        self.timeout = timeout

    def _call(self, url: str, path: str, msg: wire.WireMessage) -> dict:
        out = post(url, path, msg, self.timeout)
        if out.status == wire.ERROR:
            raise wire.error_from_wire(out)
        return out.body

    def register_node(self, nip: str, ntyp: NodeType, ipk: bytes) -> bytes:
        b = self._call(self.admin_url, "/register", wire.WireMessage("register", wire.REQUEST, {
            "entity": "node", "identity": "", "nip": nip, "ntyp": NodeType(ntyp).value, "ipk": ipk}))
        return b["nid"]

    def register_provider(self, identity: str, ipk: bytes) -> GroupMemberKey:
        b = self._call(self.admin_url, "/register", wire.WireMessage("register", wire.REQUEST, {
            "entity": "provider", "identity": identity, "nip": "", "ntyp": "", "ipk": ipk}))
        return GroupMemberKey.from_bytes(b["gsk"])

    def params(self) -> tuple[list[GroupPublicKey], Any, int, list[RevocationEntry]]:
        b = self._call(self.admin_url, "/params", wire.WireMessage("params", wire.REQUEST, {}))
        history = [GroupPublicKey.from_bytes(b["gpk"])]
        entries = [RevocationEntry.from_bytes(e) for e in b["revocations"]]
        for e in entries:
            history.append(next_gpk(history[-1], e))
        return history, pc.g2_from_bytes(b["vk_b"]), b["cycle"], entries

    def registry(self) -> Registry:
        b = self._call(self.admin_url, "/registry",
                       wire.WireMessage("registry-sync", wire.REQUEST, {"version": 0}))
        return Registry.from_snapshot(b["snapshot"])

    def mint(self, provider: str, cycle: int, xs: list[bytes], sig: bytes) -> list[bytes]:
        b = self._call(self.admin_url, "/mint", wire.WireMessage("mint", wire.REQUEST, {
            "provider": provider, "cycle": cycle, "xs": xs, "sigma": sig}))
        return b["ys"]

    def als_append(self, list_name: str, entry_map: dict) -> None:
        entry = json.loads(canonical_json(entry_map))
        self._call(self.als_url, "/als", wire.WireMessage("als-append", wire.REQUEST,
                                                          {"list": list_name, "entry": entry}))


def _rotation_map(e) -> dict:
    return {"node": e.node, "i": e.i, "pk": e.pk, "ts": e.ts, "sig": e.sig, "kind": e.kind}


# ------------------------------------------------------------ node daemons

def build_daemon(role: str, cfg: dict[str, Any]) -> Daemon:
    host, port = cfg["host"], int(cfg["port"])
    clock = SystemClock()
    if role == "admin":
        import random

        rng = random.Random(cfg["seed"]) if cfg.get("seed") is not None else None
        admin = Admin(rng)
        routes = admin_routes(admin)
        tasks: list = []
        if cfg.get("host_als", True):
            als = AuditLogServer(admin.registry, admin.gpk_history, clock, cfg["t_max"], cfg["t_rot"])
            routes.update(als_routes(als))
            tasks.append((3600.0, als.prune))
        d = Daemon(role, host, port, routes, tasks)
        d.admin = admin
        d.als = als if cfg.get("host_als", True) else None
        return d
    client = AdminClient(cfg["admin_url"], cfg["als_url"])
    if role == "als":
        history, vk_b, _, _ = client.params()
        state = {"history": history, "registry": client.registry()}
        als = AuditLogServer(state["registry"], lambda: state["history"], clock, cfg["t_max"], cfg["t_rot"])

        def refresh() -> None:
            state["history"] = client.params()[0]
            als.registry.import_snapshot(client.registry().export_snapshot())
        d = Daemon(role, host, port, als_routes(als), [(cfg["params_refresh"], refresh), (3600.0, als.prune)])
        d.als = als
        return d
    if role not in ("ev", "ms"):
        raise SystemExit(f"unknown role {role}")
    key = load_or_create_key(cfg.get("key_file"))
    d = Daemon(role, host, port, {})
    nip = cfg.get("nip") or f"{host}:{d.address[1]}"
    ntyp = NodeType.EV if role == "ev" else NodeType.MS
    history, vk_b, _, entries = client.params()
    trust = TrustAnchors(history[-1], vk_b, entries)
    try:
        nid = client.register_node(nip, ntyp, key.public)
    except wire.RemoteError as exc:
        from sidecar.registry import compute_nid

        log.info("registration: %s (reusing existing record)", exc)
        nid = compute_nid(nip, ntyp, key.public)
    feedback = AsyncSink(lambda e: client.als_append(e.kind, e.to_map()))

    def refresh() -> None:
        hist, vk, _, ents = client.params()
        trust.apply_revocations(ents)
        trust.set_billing_key(vk)

    if role == "ev":
        rotations = AsyncSink(lambda e: client.als_append("rotation", _rotation_map(e)))
        ev = Evaluator(nid, key, trust, clock, int(cfg["S"]), float(cfg["t_rot"]), float(cfg["eps_t"]),
                       feedback=feedback, rotation_log=rotations)
        d.routes = ev_routes(ev)
        d.tasks = [(1.0, ev.tick), (cfg["params_refresh"], refresh)]
        d.node = ev
    else:
        ms = MessageStore(nid, key, trust, clock, float(cfg["t_max"]), feedback=feedback)
        d.routes = ms_routes(ms)
        d.tasks = [(1.0, ms.expire_sweep), (cfg["params_refresh"], refresh)]
        d.node = ms
    d.feedback = feedback
    return d


def node_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="sidecar-node", description="Run a node daemon.")
    ap.add_argument("--role", required=True, choices=["ev", "ms", "admin", "als"])
    ap.add_argument("--config", help="YAML config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    cfg = load_config(args.config, NODE_DEFAULTS)
    d = build_daemon(args.role, cfg)
    log.info("%s listening on %s", args.role, d.url)
    d.serve_forever()
    return 0


# ------------------------------------------------------------ provider tool

def _tok_map(t: BillingToken) -> dict:
    return {"t0": b64(t.t0), "t1": b64(t.t1_bytes), "cycle": t.cycle_id}


def _tok_from(m: dict) -> BillingToken:
    return BillingToken(unb64(m["t0"]), pc.g1_from_bytes(unb64(m["t1"])), m["cycle"])


class ProviderState:
    """On-disk provider credentials and unused tokens."""

    def __init__(self, state_dir: str) -> None:
        self.dir = Path(state_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.isk = load_or_create_key(str(self.dir / "isk.seed"))

    @property
    def gsk_path(self) -> Path:
        return self.dir / "gsk.bin"

    def gsk(self) -> GroupMemberKey:
        if not self.gsk_path.exists():
            raise SystemExit("not registered; run `sidecar register` first")
        return GroupMemberKey.from_bytes(self.gsk_path.read_bytes())

    def save_gsk(self, gsk: GroupMemberKey) -> None:
        self.gsk_path.write_bytes(gsk.to_bytes())
        self.gsk_path.chmod(0o600)

    def tokens(self) -> list[BillingToken]:
        p = self.dir / "tokens.json"
        if not p.exists():
            return []
        return [_tok_from(m) for m in json.loads(p.read_text())]

    def save_tokens(self, toks: list[BillingToken]) -> None:
        (self.dir / "tokens.json").write_text(json.dumps([_tok_map(t) for t in toks]))


def _provider(cfg: dict[str, Any], st: ProviderState) -> tuple[Provider, AdminClient]:
    gsk = st.gsk()
    client = AdminClient(cfg["admin_url"], cfg["als_url"], timeout=max(5.0, cfg["timeout"]))
    history, vk_b, cycle, entries = client.params()
    for e in entries:
        gsk.apply_revocation(e)
    toks = [t for t in st.tokens() if t.cycle_id == cycle]
    wallet = TokenWallet()
    wallet.add(toks)
    net = HttpNetwork(timeout=cfg["timeout"])

    def report(r) -> None:
        client.als_append(r.kind, r.to_map())

    p = Provider(cfg["identity"], gsk, client.registry(), net, SystemClock(),
                 cfg["n"], cfg["m"], cfg["S"], wallet, report_sink=report)
    return p, client


def provider_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="sidecar", description="Provider client.")
    ap.add_argument("--config", help="YAML config file")
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("register", help="obtain group credentials from the admin")
    mt = sub.add_parser("mint-tokens", help="obtain billing tokens")
    mt.add_argument("--count", type=int, default=32)
    for name in ("gen-secret", "publish", "retrieve"):
        sp = sub.add_parser(name)
        sp.add_argument("--src", required=True)
        sp.add_argument("--dst", required=True)
        if name == "gen-secret":
            sp.add_argument("--mode", choices=[PUBLISH, RETRIEVE], default=PUBLISH)
        if name == "publish":
            sp.add_argument("--msg", help="payload string")
            sp.add_argument("--msg-file", help="payload file")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    cfg = load_config(args.config, PROVIDER_DEFAULTS)
    st = ProviderState(cfg["state_dir"])

    if args.cmd == "register":
        client = AdminClient(cfg["admin_url"], cfg["als_url"])
        st.save_gsk(client.register_provider(cfg["identity"], st.isk.public))
        print("registered", cfg["identity"])
        return 0
    if args.cmd == "mint-tokens":
        client = AdminClient(cfg["admin_url"], cfg["als_url"])
        _, vk_b, cycle, _ = client.params()
        batch = prepare_mint(cfg["identity"], st.isk, args.count, cycle)
        toks = finish_mint(batch, vk_b, client.mint(cfg["identity"], cycle, batch.xs, batch.sig))
        st.save_tokens([t for t in st.tokens() if t.cycle_id == cycle] + toks)
        print(f"minted {len(toks)} tokens")
        return 0

    p, _ = _provider(cfg, st)
    try:
        if args.cmd == "gen-secret":
            call = p.derive_cdt(args.src, args.dst)
            out = p.gen_call_secret(args.mode, call)
            for c in ([out] if isinstance(out, bytes) else out):
                print(c.hex())
        elif args.cmd == "publish":
            if args.msg_file:
                msg = Path(args.msg_file).read_bytes()
            elif args.msg is not None:
                msg = args.msg.encode()
            else:
                msg = sys.stdin.buffer.read()
            res = p.publish(args.src, args.dst, msg)
            print(f"published idx={res.idx.hex()} acks={len(res.acks)}")
        else:
            sys.stdout.buffer.write(p.retrieve(args.src, args.dst))
            sys.stdout.buffer.write(b"\n")
    except (TransportError, wire.RemoteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        code = getattr(exc, "code", type(exc).__name__)
        print(f"error: {code}: {exc}", file=sys.stderr)
        return 1
    finally:
        st.save_tokens(p.wallet.unused())
        p.net.close()
    return 0


if __name__ == "__main__":
    sys.exit(provider_main())
