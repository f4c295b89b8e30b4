import numpy as np
import pytest
from hypothesis import settings

from novikov.lattice import preset

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# criterion number -> (ok, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def tb():
    return preset("tight_binding")


@pytest.fixture(scope="session")
def corrugated():
    return preset("corrugated_cylinder")


@pytest.fixture(scope="session")
def free():
    return preset("free_electron")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
