import numpy as np
import pytest

from l1control import jacobi, shooting


@pytest.fixture(scope="session")
def problem():
    return shooting.TransferProblem.table1()


@pytest.fixture(scope="session")
def solution(problem):
    return shooting.continuation(problem)


@pytest.fixture(scope="session")
def z0_ref(problem, solution):
    return np.concatenate([problem.x0.as_array(), solution.p0])


@pytest.fixture(scope="session")
def jac_tf(problem, z0_ref):
    return jacobi.propagate_jacobi(z0_ref, (0.0, problem.t_f), problem.eps)


@pytest.fixture(scope="session")
def jac_ext(problem, z0_ref):
    return jacobi.propagate_jacobi(z0_ref, (0.0, 3.5 * problem.t_f), problem.eps)


def random_points(rng, n, pv_scale=1.0):
    """Cotangent points with |q| in [0.5, 2] and p_v away from zero."""
    out = []
    for _ in range(n):
        q = rng.normal(size=3)
        q *= rng.uniform(0.5, 2.0) / np.linalg.norm(q)
        v = rng.normal(size=3) * 0.7
        pq = rng.normal(size=3)
        pv = rng.normal(size=3)
        pv *= pv_scale * rng.uniform(0.3, 2.0) / np.linalg.norm(pv)
        out.append(np.concatenate([q, v, pq, pv]))
    return out


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
