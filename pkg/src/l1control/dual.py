"""Tagged, nestable dual numbers for forward-mode differentiation.

Each :class:`Dual` carries a *tag* identifying the differentiation it
belongs to.  Nesting is safe: an inner derivative always gets a fresh,
larger tag, and operands with smaller tags are treated as constants with
respect to it.  The real and infinitesimal parts may themselves be
:class:`Dual` instances of smaller tags, which is what makes iterated
Poisson brackets computable by plain nesting.

Vectors are numpy object arrays (or plain sequences) of Duals; use
:func:`sqrt` and friends from this module rather than numpy ufuncs.
"""
import itertools

import numpy as np

_tags = itertools.count(1)


def new_tag():
    return next(_tags)


def tag_of(x):
    return x.tag if isinstance(x, Dual) else 0


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.re, x.du
    return x, 0.0


class Dual:
    """Number ``re + du * e`` with ``e**2 = 0`` for the given tag."""

    __slots__ = ("re", "du", "tag")

    def __init__(self, re, du=0.0, tag=None):
        self.re = re
        self.du = du
        self.tag = new_tag() if tag is None else tag

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r}, tag={self.tag})"

    @property
    def value(self):
        """Innermost real value, stripping every tag."""
        x = self.re
        while isinstance(x, Dual):
            x = x.re
        return float(x)

    def __float__(self):
        return self.value

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        t = max(self.tag, tag_of(other))
        a0, a1 = _split(self, t)
        b0, b1 = _split(other, t)
        return Dual(a0 + b0, a1 + b1, t)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        t = max(self.tag, tag_of(other))
        a0, a1 = _split(self, t)
        b0, b1 = _split(other, t)
        return Dual(a0 - b0, a1 - b1, t)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        t = max(self.tag, tag_of(other))
        a0, a1 = _split(self, t)
        b0, b1 = _split(other, t)
        return Dual(b0 - a0, b1 - a1, t)

    def __neg__(self):
        return Dual(-self.re, -self.du, self.tag)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        t = max(self.tag, tag_of(other))
        a0, a1 = _split(self, t)
        b0, b1 = _split(other, t)
        return Dual(a0 * b0, a0 * b1 + a1 * b0, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        t = max(self.tag, tag_of(other))
        a0, a1 = _split(self, t)
        b0, b1 = _split(other, t)
        return Dual(a0 / b0, (a1 * b0 - a0 * b1) / (b0 * b0), t)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        t = max(self.tag, tag_of(other))
        a0, a1 = _split(other, t)
        b0, b1 = _split(self, t)
        return Dual(a0 / b0, (a1 * b0 - a0 * b1) / (b0 * b0), t)

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        if n == 0:
            return Dual(self.re ** 0, 0.0, self.tag)
        return Dual(self.re ** n, n * self.re ** (n - 1) * self.du, self.tag)

    # comparisons act on the innermost real value --------------------------
    def __lt__(self, other):
        return self.value < _value(other)

    def __le__(self, other):
        return self.value <= _value(other)

    def __gt__(self, other):
        return self.value > _value(other)

    def __ge__(self, other):
        return self.value >= _value(other)

    def __abs__(self):
        return -self if self.value < 0 else self

    # elementary functions ------------------------------------------------
    def sqrt(self):
        s = sqrt(self.re)
        return Dual(s, self.du / (2.0 * s), self.tag)

    def exp(self):
        e = exp(self.re)
        return Dual(e, e * self.du, self.tag)

    def log(self):
        return Dual(log(self.re), self.du / self.re, self.tag)

    def sin(self):
        return Dual(sin(self.re), cos(self.re) * self.du, self.tag)

    def cos(self):
        return Dual(cos(self.re), -sin(self.re) * self.du, self.tag)


def _value(x):
    return x.value if isinstance(x, Dual) else float(x)


def value(x):
    """Strip all dual parts (works elementwise on arrays and sequences)."""
    if isinstance(x, (np.ndarray, list, tuple)):
        return np.array([value(xi) for xi in x], dtype=float)
    return _value(x)


def _lift(name, fallback):
    def fn(x):
        if isinstance(x, Dual):
            return getattr(x, name)()
        if isinstance(x, np.ndarray) and x.dtype == object:
            return np.array([fn(xi) for xi in x], dtype=object)
        return fallback(x)

    fn.__name__ = name
    return fn


sqrt = _lift("sqrt", np.sqrt)
exp = _lift("exp", np.exp)
log = _lift("log", np.log)
sin = _lift("sin", np.sin)
cos = _lift("cos", np.cos)


def primal(y, tag):
    if isinstance(y, (np.ndarray, list, tuple)):
        return np.array([primal(yi, tag) for yi in y], dtype=object)
    return y.re if isinstance(y, Dual) and y.tag == tag else y


def tangent(y, tag):
    """Part of ``y`` multiplying the infinitesimal of ``tag``."""
    if isinstance(y, (np.ndarray, list, tuple)):
        out = [tangent(yi, tag) for yi in y]
        if all(not isinstance(o, Dual) for o in out):
            return np.array(out, dtype=float)
        return np.array(out, dtype=object)
    if isinstance(y, Dual) and y.tag == tag:
        return y.du
    return 0.0


def seed(x, direction, tag):
    """Object array ``x + direction * e_tag``."""
    return np.array([Dual(xi, di, tag) for xi, di in zip(x, direction)], dtype=object)


def jvp(f, x, direction):
    """Directional derivative ``f'(x) direction`` by one forward sweep."""
    tag = new_tag()
    return tangent(f(seed(x, direction, tag)), tag)


def derivative(f, x):
    """Derivative of a scalar function of one scalar variable."""
    tag = new_tag()
    return tangent(f(Dual(x, 1.0, tag)), tag)


def gradient(f, x):
    """Gradient of a scalar field, one forward sweep per coordinate."""
    n = len(x)
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(jvp(f, x, e))
    if all(not isinstance(c, Dual) for c in cols):
        return np.array(cols, dtype=float)
    return np.array(cols, dtype=object)


def jacobian(f, x):
    """Jacobian ``df_i/dx_j`` of a vector field, built column by column."""
    n = len(x)
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.asarray(jvp(f, x, e)))
    return np.stack(cols, axis=1)


__all__ = [
    "Dual", "new_tag", "tag_of", "value", "sqrt", "exp", "log", "sin", "cos",
    "primal", "tangent", "seed", "jvp", "derivative", "gradient", "jacobian",
]
