import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dfrelay.model import make_stats

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_stats(rng, n, M=4, direct=True, distinct=True):
    """Synthetic ChannelStats with b, beta drawn over a few decades."""
    b = 10 ** rng.uniform(-1.5, 1.5, n + 1)
    if not direct:
        b[0] = 0.0
    beta = rng.uniform(1.0 / M, 1.0, n)
    return make_stats(b, beta, M=M, source_power=10 ** rng.uniform(-0.5, 1.0))


def distinct_powers(rng, stats, low=0.1, high=10.0, gap=1e-3):
    """Relay powers whose b_i p_i are pairwise separated by >= gap relative."""
    while True:
        p = rng.uniform(low, high, stats.n_relays)
        x = np.sort(stats.scaled_snr(p)[stats.scaled_snr(p) > 0])
        if x.size < 2 or np.all(np.diff(x) > gap * x[1:]):
            return p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
