import random

import pytest
from hypothesis import settings

from sidecar.sim.deploy import DeployConfig, Deployment

settings.register_profile("crypto", max_examples=25, deadline=None)
settings.load_profile("crypto")


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture
def small_dep() -> Deployment:
    return Deployment(DeployConfig(N=6, M=6, n=3, m=3), seed=7)


def pytest_terminal_summary(terminalreporter) -> None:
    from tests.helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, tag, detail in sorted(ACCEPTANCE, key=lambda r: [int("".join(filter(str.isdigit, r[0])))] + [r[0]]):
        terminalreporter.write_line(f"{tag} criterion {crit}: {detail}")
