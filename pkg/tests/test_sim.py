import csv
import io
import math
from collections import Counter

import numpy as np
import pytest

from sidecar.sim import availability, burden, estimate, latency
from sidecar.sim.cli import main as sim_main
from sidecar.sim.deploy import DeployConfig
from sidecar.sim.scenario import FaultConfig, ScenarioConfig, run_scenario
from sidecar.sim.topology import gen_topology


# ------------------------------------------------------------ topology

def test_topology_is_reproducible():
    a, b = gen_topology(30, seed=5), gen_topology(30, seed=5)
    assert sorted(a.graph.edges) == sorted(b.graph.edges)
    assert a.deployed == b.deployed


def test_deploy_fraction_bounds():
    t = gen_topology(25, deploy_fraction=1.0, seed=1)
    assert t.deployed == set(t.graph.nodes)
    t = gen_topology(40, deploy_fraction=0.5, seed=1)
    assert len(t.deployed) == 20


def test_deployment_favours_high_degree():
    hi, lo = [], []
    for seed in range(10):
        t = gen_topology(60, seed=seed)
        deg = dict(t.graph.degree)
        hi.append(np.mean([deg[v] for v in t.deployed]))
        lo.append(np.mean([deg[v] for v in t.graph.nodes if v not in t.deployed]))
    assert np.mean(hi) > np.mean(lo)


def test_oob_paths_have_deployed_ends():
    t = gen_topology(30, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = t.sample_oob_path(rng)
        assert p.needs_oob
        assert p.providers[0] in t.deployed and p.providers[-1] in t.deployed
    assert 0.0 < t.oob_fraction(rng, 500) < 1.0


# ------------------------------------------------------------ scenarios

@pytest.fixture(scope="module")
def topo():
    return gen_topology(20, seed=1)


def test_honest_scenario(topo):
    r = run_scenario(topo, 15, seed=3)
    assert r.success_rate == 1.0
    assert r.disputes == [] and r.token_conflicts == []
    assert all(c.latency_s >= c.crypto_s > 0 for c in r.calls)


def test_wrong_key_ev_fails_some_calls_without_misattribution(topo):
    r = run_scenario(topo, 40, ScenarioConfig(faults=FaultConfig(wrong_key_evs=[0])), seed=1)
    fails = 1 - r.success_rate
    # one bad EV in ten lands in a 3-of-10 selection about 30% of the time
    assert 0.1 < fails < 0.6
    assert {e for e in Counter(c.error for c in r.calls)} <= {"", "InsufficientEvaluations"}
    assert r.misattributions() == 0
    assert r.disputes and all(nid in r.faulty_nodes for _, nid, v in r.disputes if v == "node-dishonest")


def test_retrieval_after_expiry_fails(topo):
    cfg = ScenarioConfig(deploy=DeployConfig(t_max=2), retrieve_delay=3.0)
    r = run_scenario(topo, 8, cfg, seed=1)
    assert r.success_rate == 0.0
    assert {c.error for c in r.calls} == {"RecordNotFound"}


def test_dropping_store_is_masked_by_replicas(topo):
    r = run_scenario(topo, 15, ScenarioConfig(faults=FaultConfig(dropping_ms=[0])), seed=2)
    assert r.success_rate == 1.0
    assert r.misattributions() == 0


def test_token_reuse_is_detected(topo):
    r = run_scenario(topo, 20, ScenarioConfig(faults=FaultConfig(token_reuse=1.0)), seed=4)
    assert r.token_conflicts
    assert r.misattributions() == 0


# ------------------------------------------------------------ burden

@pytest.mark.parametrize("Q", [1, 12])
def test_burden_matches_vnode_expectation(Q):
    r = burden.baseline_burden(Q, calls=2000, seed=1)
    assert r.sidecar_mean == pytest.approx(r.expected_sidecar, rel=1e-9)
    assert r.expected_sidecar == pytest.approx(12 / Q)
    assert r.republishes_per_call == Q - 1


# ------------------------------------------------------------ estimator

def test_estimator_zero_inputs():
    z = estimate.RoleInputs(rate=0, median_ms=0, mad_ms=0, peak_mem_bytes=0, workers=1,
                            req_res_bytes=0, t_max=0, record_bytes=0)
    e = estimate.estimate_resources(z)
    assert (e.vcpus, e.memory_bytes, e.storage_bytes, e.bandwidth_bps) == (0, 0, 0, 0)


def test_estimator_formulas_by_hand():
    assert estimate.vcpus(2000, 4.0, 0.5) == math.ceil(2000 * 5.5 / 1000)
    assert estimate.bandwidth(100, 1000) == 1_200_000
    assert estimate.storage(100, 10, 15, 1000) == 225_000
    assert estimate.memory(800, 4, 2) == math.ceil(200 * 1.5 * 5)
    assert estimate.r_oob() == pytest.approx(1.56e9 / 86400 / 10)


# ------------------------------------------------------------ availability

def test_availability_matches_closed_form():
    got = availability.retrievability(0.7, m=3, M=10, trials=20_000, seed=2)
    assert got == pytest.approx(availability.expected_retrievability(0.7, 3), abs=0.01)
    assert availability.retrievability(1.0, trials=100) == 1.0
    assert availability.retrievability(0.0, trials=100) == 0.0


# ------------------------------------------------------------ latency

def test_latency_compose_is_deterministic():
    pools = latency.measure_stages([1, 2], [1, 2], samples=6, seed=0)
    a = latency.compose(pools, 2, 1, samples=50, seed=3)
    b = latency.compose(pools, 2, 1, samples=50, seed=3)
    assert np.array_equal(a, b) and (a > 0).all()
    cells = latency.latency_profile([1, 2], [1, 2], samples=6, pools=pools)
    assert [(c.n, c.m) for c in cells] == [(1, 1), (1, 2), (2, 1), (2, 2)]


# ------------------------------------------------------------ CLI

def test_sim_cli_estimate(capsys):
    assert sim_main(["estimate"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["role"] for r in rows] == ["ev", "ms", "provider"]


def test_sim_cli_config_and_out(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("Q: [3]\nburden_calls: 200\n")
    out = tmp_path / "b.csv"
    assert sim_main(["burden", "--config", str(cfg), "--out", str(out), "--seed", "2"]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and float(rows[0]["expected_sidecar"]) == pytest.approx(4.0)


def test_sim_cli_scenario(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("calls: 3\ndeploy: {audit: false}\n")
    out = tmp_path / "s.csv"
    assert sim_main(["scenario", "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 and all(r["success"] == "1" for r in rows)


def test_throughput_burst_has_no_errors(tmp_path):
    cfg = tmp_path / "t.yaml"
    cfg.write_text("requests: 60\nconcurrency: 6\n")
    out = tmp_path / "t.csv"
    assert sim_main(["throughput", "--config", str(cfg), "--out", str(out)]) == 0
    row = next(csv.DictReader(out.open()))
    assert row["requests"] == "60" and row["errors"] == "0" and float(row["rps"]) > 0
