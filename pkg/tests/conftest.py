import numpy as np
import pytest

from stegonet.nn import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test once per available kernel backend."""
    prev = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion outcome and fail the test if any check fails."""
    results = request.config.stash[_ACCEPTANCE]

    def record(number: int, title: str, checks: dict, detail: str = "") -> None:
        failed = [name for name, ok in checks.items() if not ok]
        results.append((number, title, not failed, detail))
        print(f"[{'FAIL' if failed else 'PASS'}] {number}. {title}: {detail}")
        assert not failed, f"criterion {number} failed checks {failed}; {detail}"

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
