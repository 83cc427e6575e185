import numpy as np
import pytest

from rislex.sysmodel import ChannelSet, SystemConfig

CRITERIA = {}


def random_channels(rng, K, N, M, scale=1e-6):
    """Rayleigh-like cascaded channels with random positive weights."""
    H1 = scale * (rng.standard_normal((K, N, M)) + 1j * rng.standard_normal((K, N, M)))
    h2 = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    w = rng.uniform(1.0, 4.0, K)
    return ChannelSet(H1=H1, h2=h2, w=w)


def small_config(K=2, N=4, M=2, **kw):
    return SystemConfig(K=K, N=N, M=M, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def report_criterion():
    """Record one pass/fail line per acceptance criterion for the summary."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} -- {detail}"
        CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
