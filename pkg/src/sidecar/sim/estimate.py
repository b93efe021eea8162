"""Ceiling-formula resource estimator for node operators."""

from __future__ import annotations

import math
from dataclasses import dataclass

OVERHEAD = 1.5
MB = 1_000_000
KIB = 1024

OOB_CALLS_PER_DAY = 1.56e9
DEFAULT_NODES = 10


def r_oob(daily_calls: float = OOB_CALLS_PER_DAY, nodes: int = DEFAULT_NODES) -> float:
    """Per-node request rate (req/s) when daily traffic is spread over ``nodes``."""
    return daily_calls / (nodes * 86400)


@dataclass(frozen=True)
class RoleInputs:
    rate: float  # requests per second
    median_ms: float
    mad_ms: float
    peak_mem_bytes: float  # peak memory of one process
    workers: int
    req_res_bytes: float  # request plus response size
    t_max: float = 0.0  # seconds a record is kept (0 for stateless roles)
    record_bytes: float = 0.0
    nodes: int = DEFAULT_NODES
    overhead: float = OVERHEAD


@dataclass(frozen=True)
class ResourceEstimate:
    vcpus: int
    memory_bytes: int
    storage_bytes: int
    bandwidth_bps: int


def vcpus(rate: float, median_ms: float, mad_ms: float) -> int:
    return math.ceil(rate * (median_ms + 3 * mad_ms) / 1000)


def memory(peak_bytes: float, workers: int, cpus: int, overhead: float = OVERHEAD) -> int:
    if workers <= 0:
        return 0
    return math.ceil(peak_bytes / workers * overhead * (2 * cpus + 1))


def storage(rate: float, nodes: int, t_max: float, record_bytes: float, overhead: float = OVERHEAD) -> int:
    return math.ceil(rate / nodes * t_max * record_bytes * overhead)


def bandwidth(rate: float, req_res_bytes: float, overhead: float = OVERHEAD) -> int:
    return math.ceil(rate * req_res_bytes * 8 * overhead)


def estimate_resources(inp: RoleInputs) -> ResourceEstimate:
    cpu = vcpus(inp.rate, inp.median_ms, inp.mad_ms)
    return ResourceEstimate(
        cpu,
        memory(inp.peak_mem_bytes, inp.workers, cpu, inp.overhead),
        storage(inp.rate, inp.nodes, inp.t_max, inp.record_bytes, inp.overhead),
        bandwidth(inp.rate, inp.req_res_bytes, inp.overhead),
    )


def reference_inputs() -> dict[str, RoleInputs]:
    """Measured medians/MADs and sizes from the reference prototype."""
    rate = r_oob()
    return {
        "ev": RoleInputs(rate, 5.267, 0.140, 785 * MB, 4, 1300, t_max=15.0, record_bytes=1300),
        # a store sees one publish and one retrieve per call
        "ms": RoleInputs(rate, 4.976, 0.057, 850 * MB, 4, 1.5 * KIB + 2.2 * KIB,
                         t_max=15.0, record_bytes=1.5 * KIB),
        "provider": RoleInputs(1000.0, 13.052 + 17.230, 0.923 + 1.076, 1500 * MB, 6,
                               1300 + 1.5 * KIB + 2.2 * KIB),
    }
