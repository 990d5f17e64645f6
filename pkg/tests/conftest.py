import numpy as np
import pytest

from basisdiag.detfun import DetFunction, find_spectrum
from basisdiag.model import PerturbedModel, build_integration_operator, vector_from_tag

LN2 = np.log(2.0)

# filled by the acceptance tests, printed in the terminal summary
ACCEPTANCE = {}


def s1_zeros(ks):
    """Zeros of (1 - i) + i exp(iz)."""
    ks = np.asarray(ks)
    return np.pi / 4 + 2 * np.pi * ks - 0.5j * LN2


def s1_phi(z):
    return (1 - 1j) + 1j * np.exp(1j * np.asarray(z))


def make_model(g="one", f="one", n=201, a=1.0, scheme="chebyshev"):
    B = build_integration_operator(a, n, scheme)
    return PerturbedModel(B, vector_from_tag(B.grid, f), vector_from_tag(B.grid, g))


@pytest.fixture(scope="session")
def s1():
    return make_model()


@pytest.fixture(scope="session")
def s1_det(s1):
    return DetFunction(s1)


@pytest.fixture(scope="session")
def s1_spec(s1_det):
    # k = 0..9 plus nothing on the left
    return find_spectrum(s1_det, (-1.0, 60.0, -2.0, 2.0))


@pytest.fixture(scope="session")
def s1_wide(s1_det):
    return find_spectrum(s1_det, (-100.0, 100.0, -2.0, 2.0))


@pytest.fixture(scope="session")
def s3():
    return make_model(g="exp_t")


@pytest.fixture(scope="session")
def s3_det(s3):
    return DetFunction(s3)


@pytest.fixture(scope="session")
def s3_spec(s3_det):
    return find_spectrum(s3_det, (-60.0, 60.0, -4.0, 4.0))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<4} {'PASS' if ok else 'FAIL'}  {detail}")
