import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from l1control import dual

x_val = st.floats(0.2, 3.0)


@settings(max_examples=50, deadline=None)
@given(x_val)
def test_scalar_derivatives(x):
    assert_allclose(dual.derivative(lambda t: t ** 3 - 2 * t, x), 3 * x * x - 2, atol=1e-13)
    assert_allclose(dual.derivative(lambda t: 1 / t, x), -1 / (x * x), rtol=1e-14)
    assert_allclose(dual.derivative(dual.sqrt, x), 0.5 / math.sqrt(x), rtol=1e-14)
    assert_allclose(dual.derivative(lambda t: dual.sin(t) * dual.exp(t), x),
                    math.exp(x) * (math.sin(x) + math.cos(x)), rtol=1e-13)
    assert_allclose(dual.derivative(dual.log, x), 1 / x, rtol=1e-14)
    assert_allclose(dual.derivative(abs, -x), -1.0)


def test_nested_no_perturbation_confusion():
    # d/dx [x * d/dy (x + y)] = 1, a classic confusion test
    def outer(x):
        return x * dual.derivative(lambda y: x + y, 1.0)

    assert_allclose(dual.value(dual.derivative(outer, 2.0)), 1.0)


def test_second_derivative_by_nesting():
    def d(f):
        return lambda t: dual.derivative(f, t)

    f = lambda t: t ** 4
    assert_allclose(dual.value(d(d(f))(1.5)), 12 * 1.5 ** 2, rtol=1e-14)
    assert_allclose(dual.value(d(d(d(f)))(1.5)), 24 * 1.5, rtol=1e-14)


def test_gradient_and_jacobian_match_fd():
    rng = np.random.default_rng(0)

    def f(x):
        return dual.sqrt(x[0] ** 2 + x[1] ** 2 + 1) * x[2] - x[0] / x[1]

    def g(x):
        return np.array([x[0] * x[1], dual.sin(x[2]), x[0] / (1 + x[2] ** 2)], dtype=object)

    for _ in range(10):
        x = rng.uniform(0.5, 2.0, size=3)
        h = 1e-6
        fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)])
        assert_allclose(dual.gradient(f, x), fd, rtol=1e-7)
        gfd = np.array([(np.array(g(x + h * e), dtype=float) - np.array(g(x - h * e), dtype=float))
                        / (2 * h) for e in np.eye(3)]).T
        assert_allclose(np.asarray(dual.jacobian(g, x), dtype=float), gfd, rtol=1e-7, atol=1e-9)


def test_value_strips_tags():
    a = dual.Dual(dual.Dual(2.0, 1.0), 3.0)
    assert a.value == 2.0 and float(a) == 2.0
    assert_allclose(dual.value([a, 1.0]), [2.0, 1.0])
