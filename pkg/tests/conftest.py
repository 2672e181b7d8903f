import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_traceless(rng, scale=1.0):
    """Random divergence-free Jacobian: traceless strain plus random vorticity."""
    S = rng.normal(size=(3, 3))
    S = 0.5 * (S + S.T)
    S -= np.trace(S) / 3.0 * np.eye(3)
    W = rng.normal(size=(3, 3))
    W = 0.5 * (W - W.T)
    return scale * (S + W)


ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion: ``criterion(n, detail)``."""
    state = {}

    def record(number: int, detail: str = "") -> None:
        state["n"], state["detail"] = number, detail

    yield record
    if "n" in state:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        ACCEPTANCE[state["n"]] = ("PASS" if ok else "FAIL", state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
