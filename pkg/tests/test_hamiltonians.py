import numpy as np
import pytest
from numpy.testing import assert_allclose

from l1control import dual
from l1control.errors import DomainError
from l1control.hamiltonians import (
    ExtremalPoint,
    bracket,
    control_law,
    h0,
    h01,
    h1,
    hamiltonian_field,
    maximized_hamiltonian,
    poisson_bracket,
    regularized_control,
    symplectic_gradient,
)
from l1control.potential import PotentialModel, grad_potential, hessian_quadratic

from conftest import random_points

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
Z3 = np.zeros(3)


def point(q=E1, v=Z3, pq=Z3, pv=Z3):
    return np.concatenate([q, v, pq, pv])


def test_extremal_point_validation():
    z = ExtremalPoint(E1, E2, Z3, E1)
    assert_allclose(ExtremalPoint.from_array(z.as_array()).as_array(), z.as_array())
    with pytest.raises(ValueError):
        ExtremalPoint(E1, E2, Z3, np.zeros(2))


def test_h0_values():
    assert h0(point(v=E2)) == 0.0
    assert_allclose(h0(point(pv=E1)), -1.0)


def test_h0_is_costate_dot_drift():
    rng = np.random.default_rng(1)
    model = PotentialModel(1.0)
    for z in random_points(rng, 50):
        q, v, pq, pv = z[0:3], z[3:6], z[6:9], z[9:12]
        drift = np.concatenate([v, -grad_potential(model, q)])
        assert_allclose(h0(z), np.concatenate([pq, pv]) @ drift, rtol=1e-13, atol=1e-13)


def test_h1_values():
    assert h1(point()) == -1.0
    assert h1(point(pv=2 * E1)) == 1.0
    u = np.array([1.0, 2.0, -2.0]) / 3.0
    assert abs(h1(point(pv=u))) < 1e-15


def test_h01_values():
    assert h01(point(pq=E2, pv=E1)) == 0.0
    assert_allclose(h01(point(pq=E1, pv=E1)), -1.0)
    with pytest.raises(DomainError):
        h01(point(pq=E1))


def test_h01_matches_engine():
    rng = np.random.default_rng(2)
    for z in random_points(rng, 50):
        assert_allclose(poisson_bracket(h0, h1, z), h01(z), rtol=1e-8, atol=1e-12)
        assert_allclose(bracket("H01", z), h01(z), rtol=1e-8, atol=1e-12)


def test_bracket_antisymmetry_and_leibniz():
    rng = np.random.default_rng(3)

    def f(z):
        return z[0] * z[6] + z[3] ** 2 * z[11] - z[9] * z[1]

    def prod(z):
        return h0(z) * h1(z)

    for z in random_points(rng, 20):
        assert abs(poisson_bracket(h0, h0, z)) < 1e-12
        assert abs(poisson_bracket(f, f, z)) < 1e-12
        assert_allclose(poisson_bracket(f, h0, z), -poisson_bracket(h0, f, z), rtol=1e-12,
                        atol=1e-12)
        lhs = poisson_bracket(f, prod, z)
        rhs = poisson_bracket(f, h0, z) * h1(z) + h0(z) * poisson_bracket(f, h1, z)
        assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_bracket_jacobi_identity():
    rng = np.random.default_rng(4)

    def f(z):
        return z[0] * z[9] + z[4] * z[7]

    def g(z):
        return z[1] ** 2 * z[10] + z[6] * z[5]

    def k(z):
        return z[2] * z[11] - z[8] * z[3] * z[0]

    def br(a, b):
        return lambda z: poisson_bracket(a, b, z)

    for z in random_points(rng, 10):
        s = (poisson_bracket(f, br(g, k), z) + poisson_bracket(g, br(k, f), z)
             + poisson_bracket(k, br(f, g), z))
        assert abs(dual.value(s)) < 1e-10


def test_time_derivative_convention():
    # d/dt g = {H, g} along the flow of H: check on g = H1 with H = H0
    rng = np.random.default_rng(5)
    for z in random_points(rng, 10):
        rate = dual.gradient(h1, z) @ hamiltonian_field(z, 0.0)
        assert_allclose(rate, h01(z), rtol=1e-12, atol=1e-14)


def test_h101_h1001_vanish():
    rng = np.random.default_rng(6)
    for z in random_points(rng, 100):
        assert abs(bracket("H101", z)) <= 1e-9
        assert abs(bracket("H1001", z)) <= 1e-9


def test_h001_closed_form():
    rng = np.random.default_rng(7)
    model = PotentialModel(1.0)
    for z in random_points(rng, 30):
        pq, pv = z[6:9], z[9:12]
        z[6:9] = pq - (pq @ pv) / (pv @ pv) * pv  # restrict to (p_q|p_v) = 0
        s = np.linalg.norm(pv)
        closed = (-hessian_quadratic(model, z[0:3], pv) + z[6:9] @ z[6:9]) / s
        assert_allclose(bracket("H001", z), closed, rtol=1e-8, atol=1e-10)


def test_h10001_closed_form():
    # on the surface (p_q|p_v) = 0 the fourth-order coefficient is -V'''(q) p_v^3 / |p_v|^2
    from l1control.potential import third_cubic

    rng = np.random.default_rng(8)
    model = PotentialModel(1.0)
    for z in random_points(rng, 20):
        pq, pv = z[6:9], z[9:12]
        z[6:9] = pq - (pq @ pv) / (pv @ pv) * pv
        closed = -third_cubic(model, z[0:3], pv) / (pv @ pv)
        assert_allclose(bracket("H10001", z), closed, rtol=1e-8, atol=1e-10)


def test_field_matches_symplectic_gradient():
    rng = np.random.default_rng(9)
    for z in random_points(rng, 50):
        for rho in (0.0, 0.3, 1.0):
            ham = lambda x, r=rho: h0(x) + r * 0.7 * h1(x)
            assert_allclose(hamiltonian_field(z, rho, eps=0.7), symplectic_gradient(ham, z),
                            rtol=1e-9, atol=1e-12)


def test_control_law():
    c = control_law(point(pv=0.5 * E1))
    assert c.rho == 0.0
    c = control_law(point(pv=2 * E1))
    assert c.rho == 1.0
    assert_allclose(c.w, E1)
    assert_allclose(c.u, E1)
    assert control_law(point()).rho == 0.0
    assert control_law(point(pv=E1)).boundary


def test_regularized_control():
    assert_allclose(regularized_control(point(pv=E1), 0.5), 0.5)
    assert regularized_control(point(), 0.0) == 0.0
    assert regularized_control(point(pv=3 * E1), 0.9) == 1.0
    with pytest.raises(ValueError):
        regularized_control(point(pv=E1), 1.0)


def test_regularized_control_is_maximizer():
    rng = np.random.default_rng(10)
    grid = np.linspace(0.0, 1.0, 2001)
    for _ in range(50):
        lam = rng.uniform(0, 0.999)
        s = rng.uniform(0, 3)
        z = point(pv=s * E2)
        rho = regularized_control(z, lam)
        best = np.max(grid * s - lam * grid - (1 - lam) * grid ** 2)
        assert rho * s - lam * rho - (1 - lam) * rho ** 2 >= best - 1e-12


def test_maximized_hamiltonian_limits():
    z = point(v=E2, pq=0.1 * E2, pv=1.5 * E1)
    assert_allclose(maximized_hamiltonian(z, 1.0, eps=0.1), h0(z) + 0.1 * 0.5)
    # lambda -> 1 tends to the L1 value
    assert_allclose(maximized_hamiltonian(z, 0.999999, eps=0.1), h0(z) + 0.05, atol=1e-6)
