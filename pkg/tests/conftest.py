import numpy as np
import pytest

from dualproc.gridworld import GridWorld


@pytest.fixture
def open5():
    return GridWorld(width=5, height=5, goal=(4, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cell_state(world, r, c):
    return world.state_of((r, c))


@pytest.fixture(scope="session")
def default_compare(tmp_path_factory):
    """The default ``compare`` run (mb, mf, dual; 100 trials, 30 seeds), written to disk once."""
    from dualproc.cli import build_config, run_compare

    out = tmp_path_factory.mktemp("compare_seq")
    cfg = build_config(overrides={"out": str(out), "workers": 1})
    results = run_compare(cfg, echo=False)
    return results, out


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(criterion, ok, detail)``."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def add(name, ok, detail):
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
