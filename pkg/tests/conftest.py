import numpy as np
import pytest

from fpflab import RngStream, load_tolerances


@pytest.fixture(scope="session")
def tol():
    return load_tolerances()


@pytest.fixture
def rng():
    return RngStream(20240601)


def random_spd(d, rng, cond=10.0):
    g = rng.generator()
    q, _ = np.linalg.qr(g.standard_normal((d, d)))
    w = np.geomspace(1.0, cond, d)
    return (q * w) @ q.T


ACCEPTANCE = []


@pytest.fixture
def record(request):
    """Collect one verdict line per acceptance check for the terminal summary."""

    def add(ok, detail):
        ACCEPTANCE.append((request.node.name, bool(ok), detail))
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance summary")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
