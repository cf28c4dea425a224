import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anmf.model import Scenario

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def paper_scenario():
    """N=30, n=60, b=0.96j, theta=20 deg, Gaussian clutter."""
    return Scenario(N=30, n=60, b=0.96j, theta=20.0, a=0.9)


def random_psd(rng, N, rank=None):
    rank = N if rank is None else rank
    G = rng.standard_normal((N, rank)) + 1j * rng.standard_normal((N, rank))
    return G @ G.conj().T / rank


def gaussian_samples(rng, C_sqrt, n):
    N = C_sqrt.shape[0]
    W = (rng.standard_normal((N, n)) + 1j * rng.standard_normal((N, n))) / np.sqrt(2)
    return C_sqrt @ W


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request, capsys):
    """Record and print one PASS/FAIL line, then assert it."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        request.config.stash[ACCEPTANCE_LINES].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return record
