import functools

import numpy as np
import pytest

from heinfer.ckks import keygen, preset


@functools.lru_cache(maxsize=None)
def keys_for(name: str, seed: int = 7):
    params = preset(name)
    sk, rk = keygen(params, seed=seed)
    return params, sk, rk


@pytest.fixture(params=["P11", "P12", "P13", "P14"])
def preset_name(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def p12():
    return keys_for("P12")


@pytest.fixture(scope="session")
def p13():
    return keys_for("P13")


@pytest.fixture(scope="session")
def p11():
    return keys_for("P11")


# acceptance verdict lines, echoed in the terminal summary
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
