import numpy as np
import pytest
from hypothesis import settings

from cmcf import group as grp

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def _unit(n, i, j):
    e = np.zeros((n, n))
    e[i, j] = 1.0
    return e


def matrix_rep(g):
    """Faithful nilpotent matrix representation of the algebra, one matrix per basis vector.

    Used as an independent oracle for the group law: x.y = log(exp(x) exp(y)).
    """
    if g.name.startswith("euclidean"):
        m = g.n
        return [_unit(m + 1, k, m) for k in range(m)]
    if g.name == "heisenberg:1":
        return [_unit(3, 0, 1), _unit(3, 1, 2), _unit(3, 0, 2)]
    if g.name == "engel":
        return [_unit(4, 0, 1) + _unit(4, 1, 2), _unit(4, 2, 3), _unit(4, 1, 3), _unit(4, 0, 3)]
    raise KeyError(g.name)


def nil_exp(A):
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, A.shape[0] + 1):
        term = term @ A / k
        out = out + term
    return out


def nil_log(M):
    N = M - np.eye(M.shape[0])
    out = np.zeros_like(N)
    term = np.eye(M.shape[0])
    for k in range(1, M.shape[0] + 1):
        term = term @ N
        out = out + ((-1) ** (k + 1)) * term / k
    return out


def coords(basis, A):
    B = np.stack([b.ravel() for b in basis], axis=1)
    sol, *_ = np.linalg.lstsq(B, A.ravel(), rcond=None)
    return sol


def oracle_multiply(g, x, y):
    basis = matrix_rep(g)
    X = sum(xi * b for xi, b in zip(x, basis))
    Y = sum(yi * b for yi, b in zip(y, basis))
    return coords(basis, nil_log(nil_exp(X) @ nil_exp(Y)))


@pytest.fixture(params=["euclidean:2", "heisenberg:1", "engel"])
def any_group(request):
    return grp.preset(request.param)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def record():
    def _record(name, passed, detail):
        ACCEPTANCE[name] = f"{name} {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE[name])
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[name])
