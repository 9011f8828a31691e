import functools

import pytest

from hopmat.config import load_config
from hopmat.harness import Design, Suite
from hopmat.simulation import run


@functools.lru_cache(maxsize=None)
def suite() -> Suite:
    return Suite(load_config())


@functools.lru_cache(maxsize=None)
def design(name: str) -> Design:
    return Design(name, (suite().catalog[name],))


@functools.lru_cache(maxsize=None)
def closed_loop(material: str, behavior: str, dt: float = 1e-3, duration: float | None = None):
    """One cached closed-loop run with the default config."""
    s = suite()
    spec = s.behavior(behavior, duration)
    model = s.model(design(material), spec)
    return run(model, s.gains, spec, dt, sample_period=s.sample_period)


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def md_static():
    return closed_loop("MD", "static")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
