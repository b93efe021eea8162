"""``sidecar-sim``: run desk-scale experiments and write CSV.

Columns per command:

scenario  call, publisher, retriever, success, error, crypto_ms, latency_ms
burden    Q, n, m, calls, sidecar_mean, expected_sidecar, sidecar_min, sidecar_max,
          broadcast_mean, republishes_per_call
estimate  role, vcpus, memory_bytes, storage_bytes, bandwidth_bps
latency   n, m, median_ms, samples
throughput requests, concurrency, errors, elapsed_s, rps
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path
from typing import Any

import yaml

from sidecar.sim import burden, estimate, latency, scenario, throughput
from sidecar.sim.deploy import DeployConfig
from sidecar.sim.topology import DEFAULT_DEPLOY_FRACTION, gen_topology

DEFAULTS: dict[str, Any] = {
    "calls": 100,
    "providers": 20,
    "deploy_fraction": DEFAULT_DEPLOY_FRACTION,
    "deploy": {},  # DeployConfig fields: N, M, n, m, S, t_rot, eps_t, t_max, audit
    "faults": {},  # wrong_key_evs, dropping_ms, token_reuse
    "retrieve_delay": 0.5,
    "Q": [2, 4, 8, 16],
    "burden_calls": 10_000,
    "n_grid": [1, 2, 3, 4, 5, 6],
    "m_grid": [1, 2, 3, 4, 5, 6],
    "samples": 500,
    "requests": 1000,
    "concurrency": 8,
}


def _rows_scenario(cfg: dict, seed: int) -> list[dict]:
    topo = gen_topology(cfg["providers"], cfg["deploy_fraction"], seed)
    scfg = scenario.ScenarioConfig(DeployConfig(**cfg["deploy"]), scenario.FaultConfig(**cfg["faults"]),
                                   retrieve_delay=cfg["retrieve_delay"])
    res = scenario.run_scenario(topo, cfg["calls"], scfg, seed)
    print(f"success rate {res.success_rate:.4f}, conflicts {len(res.token_conflicts)}, "
          f"misattributions {res.misattributions()}", file=sys.stderr)
    return [{"call": i, "publisher": c.publisher, "retriever": c.retriever, "success": int(c.success),
             "error": c.error, "crypto_ms": round(c.crypto_s * 1000, 3),
             "latency_ms": round(c.latency_s * 1000, 3)} for i, c in enumerate(res.calls)]


def _rows_burden(cfg: dict, seed: int) -> list[dict]:
    n, m = cfg["deploy"].get("n", 3), cfg["deploy"].get("m", 3)
    rows = []
    for Q in cfg["Q"]:
        r = burden.baseline_burden(Q, n, m, cfg["burden_calls"], seed)
        rows.append({"Q": Q, "n": n, "m": m, "calls": r.calls, "sidecar_mean": r.sidecar_mean,
                     "expected_sidecar": r.expected_sidecar,
                     "sidecar_min": min(r.sidecar_counts) / r.calls,
                     "sidecar_max": max(r.sidecar_counts) / r.calls,
                     "broadcast_mean": r.broadcast_mean, "republishes_per_call": r.republishes_per_call})
    return rows


def _rows_estimate(cfg: dict, seed: int) -> list[dict]:
    return [{"role": role, **dataclasses.asdict(estimate.estimate_resources(inp))}
            for role, inp in estimate.reference_inputs().items()]


def _rows_latency(cfg: dict, seed: int) -> list[dict]:
    cells = latency.latency_profile(cfg["n_grid"], cfg["m_grid"], cfg["samples"], seed)
    return [dataclasses.asdict(c) for c in cells]


def _rows_throughput(cfg: dict, seed: int) -> list[dict]:
    r = throughput.evaluate_throughput(cfg["requests"], cfg["concurrency"], seed)
    return [{**dataclasses.asdict(r), "rps": round(r.rps, 2)}]


COMMANDS = {"scenario": _rows_scenario, "burden": _rows_burden, "estimate": _rows_estimate,
            "latency": _rows_latency, "throughput": _rows_throughput}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="sidecar-sim")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="CSV path (stdout if omitted)")
    args = ap.parse_args(argv)
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(yaml.safe_load(args.config.read_text()) or {})
    rows = COMMANDS[args.command](cfg, args.seed)
    fh = args.out.open("w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else [])
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
