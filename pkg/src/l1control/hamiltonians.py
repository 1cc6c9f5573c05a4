"""Competing Hamiltonians of the L1 problem and a Poisson-bracket engine.

Costate convention is normal (``p0 = -1``).  With the control bound ``eps``
kept explicit, the pseudo-Hamiltonian reads ``H0 + rho * eps * H1`` where

* ``H0 = (p_q|v) - (p_v|grad V(q))`` is the lift of the drift,
* ``H1 = |p_v| - 1`` is the switching function.

Brackets follow ``{f, g} = dg . X_f`` with ``X_f = (df/dp, -df/dx)`` the
Hamiltonian vector field of ``f``, so that ``d/dt g = {H, g}`` along the
flow of ``H``.  This makes ``H01 = {H0, H1} = -(p_q|p_v)/|p_v|``.

Points ``z`` are 12-vectors ``(q, v, p_q, p_v)``; any function here also
accepts :class:`ExtremalPoint` and object arrays of dual numbers.
"""
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .errors import DomainError
from .potential import PotentialModel, grad_potential, hessian_apply

DEFAULT_MODEL = PotentialModel()

# direction used for w when p_v = 0 (throttle is zero there anyway)
_CANONICAL_W = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class ExtremalPoint:
    """Cotangent point ``z = (q, v, p_q, p_v)``."""

    q: np.ndarray
    v: np.ndarray
    p_q: np.ndarray
    p_v: np.ndarray

    def __post_init__(self):
        for name in ("q", "v", "p_q", "p_v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (3,):
                raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_array(cls, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (12,):
            raise ValueError(f"expected 12 components, got shape {z.shape}")
        return cls(z[0:3], z[3:6], z[6:9], z[9:12])

    def as_array(self):
        return np.concatenate([self.q, self.v, self.p_q, self.p_v])

    @property
    def x(self):
        return np.concatenate([self.q, self.v])

    @property
    def p(self):
        return np.concatenate([self.p_q, self.p_v])


@dataclass(frozen=True)
class ControlValue:
    """Throttle ``rho`` and unit direction ``w``; ``boundary`` flags H1 = 0."""

    rho: float
    w: np.ndarray = field(default_factory=lambda: _CANONICAL_W.copy())
    boundary: bool = False

    @property
    def u(self):
        return self.rho * self.w


def as_vector(z):
    if isinstance(z, ExtremalPoint):
        return z.as_array()
    if isinstance(z, np.ndarray) and z.dtype == object:
        return z
    return np.asarray(z, dtype=float)


def _split(z):
    z = as_vector(z)
    return z[0:3], z[3:6], z[6:9], z[9:12]


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a):
    return dual.sqrt(_dot(a, a))


# --- the Hamiltonians -------------------------------------------------------

def h0(z, model=DEFAULT_MODEL):
    q, v, pq, pv = _split(z)
    return _dot(pq, v) - _dot(pv, grad_potential(model, q))


def h1(z, model=DEFAULT_MODEL):
    _, _, _, pv = _split(z)
    return _norm(pv) - 1.0


def h01(z, model=DEFAULT_MODEL):
    """Closed form ``-(p_q|p_v)/|p_v|``."""
    _, _, pq, pv = _split(z)
    s = _norm(pv)
    if dual.value(s) == 0.0:
        raise DomainError("H01 undefined at p_v = 0")
    return -_dot(pq, pv) / s


def hamiltonian_field(z, rho, model=DEFAULT_MODEL, eps=1.0):
    """Closed-form ``X_{H0 + rho eps H1}(z)``, dual-friendly."""
    q, v, pq, pv = _split(z)
    acc = -grad_potential(model, q)
    if dual.value(rho) != 0.0:
        s = _norm(pv)
        if dual.value(s) == 0.0:
            raise DomainError("thrust direction undefined at p_v = 0")
        acc = acc + rho * eps * np.asarray(pv) / s
    return np.concatenate([
        np.asarray(v),
        acc,
        hessian_apply(model, q, pv),
        -np.asarray(pq),
    ])


def h0_field(z, model=DEFAULT_MODEL):
    return hamiltonian_field(z, 0.0, model)


def h1_field(z, model=DEFAULT_MODEL):
    """``X_{H1}``: only the velocity rows are nonzero."""
    _, _, _, pv = _split(z)
    s = _norm(pv)
    if dual.value(s) == 0.0:
        raise DomainError("H1 is not differentiable at p_v = 0")
    zero = np.zeros(3)
    return np.concatenate([zero, np.asarray(pv) / s, zero, zero])


# --- Poisson brackets ---------------------------------------------------------

def symplectic_gradient(f, z):
    """``X_f = J grad f`` with ``J = [[0, I], [-I, 0]]`` in (x, p) blocks."""
    z = as_vector(z)
    g = dual.gradient(f, z)
    n = len(z) // 2
    return np.concatenate([g[n:], -g[:n]])


def poisson_bracket(f, g, z, field_f=None):
    """``{f, g}(z)``: derivative of ``g`` along the Hamiltonian field of ``f``.

    ``field_f`` may supply ``X_f`` in closed form; otherwise it is obtained
    from the dual-number gradient of ``f`` (one sweep per coordinate).
    Nesting works because every sweep uses a fresh dual tag.
    """
    z = as_vector(z)
    xf = field_f(z) if field_f is not None else symplectic_gradient(f, z)
    return dual.jvp(g, z, xf)


def lie_derivative(g, field_fn):
    """Return ``z -> dg(z) . field_fn(z)`` as a new function."""
    def fn(z):
        z = as_vector(z)
        return dual.jvp(g, z, field_fn(z))
    return fn


def bracket_fn(f, g, field_f=None):
    """Curried :func:`poisson_bracket`, suitable for nesting."""
    def fn(z):
        return poisson_bracket(f, g, z, field_f)
    return fn


def make_brackets(model=DEFAULT_MODEL):
    """Named brackets ``H01 ... H10001`` built by nesting the engine.

    The outer ``H0`` brackets reuse the closed-form drift field, which is
    exact and saves the twelve gradient sweeps per level.
    """
    def _h0(z):
        return h0(z, model)

    def _h1(z):
        return h1(z, model)

    def _f0(z):
        return hamiltonian_field(z, 0.0, model)

    b01 = bracket_fn(_h0, _h1, _f0)
    b001 = bracket_fn(_h0, b01, _f0)
    b0001 = bracket_fn(_h0, b001, _f0)
    b00001 = bracket_fn(_h0, b0001, _f0)
    return {
        "H0": _h0,
        "H1": _h1,
        "H01": b01,
        "H101": bracket_fn(_h1, b01, h1_field),
        "H001": b001,
        "H1001": bracket_fn(_h1, b001, h1_field),
        "H0001": b0001,
        "H00001": b00001,
        "H10001": bracket_fn(_h1, b0001, h1_field),
    }


_DEFAULT_BRACKETS = make_brackets()


def bracket(name, z, model=DEFAULT_MODEL):
    """Evaluate a named bracket such as ``"H0001"`` at ``z``."""
    table = _DEFAULT_BRACKETS if model == DEFAULT_MODEL else make_brackets(model)
    try:
        fn = table[name]
    except KeyError:
        raise ValueError(f"unknown bracket {name!r}") from None
    return dual.value(fn(as_vector(z)))


# --- controls -------------------------------------------------------------------

def control_law(z):
    """Pointwise maximizer of ``H0 + rho H1`` over ``rho in [0, 1]``."""
    _, _, _, pv = _split(z)
    pv = np.asarray(pv, dtype=float)
    s = float(np.linalg.norm(pv))
    w = pv / s if s > 0 else _CANONICAL_W.copy()
    g = s - 1.0
    if g > 0:
        return ControlValue(1.0, w)
    if g < 0:
        return ControlValue(0.0, w)
    return ControlValue(1.0, w, boundary=True)


def regularized_control(z, lam):
    """Maximizer of ``rho |p_v| - lam rho - (1 - lam) rho**2`` on [0, 1]."""
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"regularized control needs 0 <= lambda < 1, got {lam}")
    _, _, _, pv = _split(z)
    s = float(np.linalg.norm(np.asarray(pv, dtype=float)))
    return float(np.clip((s - lam) / (2.0 * (1.0 - lam)), 0.0, 1.0))


def maximized_hamiltonian(z, lam, model=DEFAULT_MODEL, eps=1.0):
    """``H0 + eps * max_rho (rho |p_v| - cost_lam(rho))``; ``lam = 1`` is L1."""
    s = float(np.linalg.norm(np.asarray(_split(z)[3], dtype=float)))
    if lam >= 1.0:
        rho = 1.0 if s > 1.0 else 0.0
        gain = rho * (s - 1.0)
    else:
        rho = regularized_control(z, lam)
        gain = rho * s - lam * rho - (1.0 - lam) * rho ** 2
    return float(h0(z, model)) + eps * gain
