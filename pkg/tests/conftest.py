import numpy as np
import pytest

from olstec.core import MaskedSlice

_CRITERIA = {}


def record_criterion(number, passed, detail=""):
    _CRITERIA[number] = (passed, detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def random_stream(L, W, R, T, rho, seed, noise=0.0):
    """Small random low-rank stream as a list of MaskedSlice (independent of olstec.streams)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((L, R))
    C = rng.standard_normal((W, R))
    out = []
    for t in range(T):
        Y = (A * rng.standard_normal(R)) @ C.T + noise * rng.standard_normal((L, W))
        out.append(MaskedSlice(Y, rng.random((L, W)) < rho, t))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
