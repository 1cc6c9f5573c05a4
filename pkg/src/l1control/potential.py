"""Two-body potential V(q) = -mu/|q| and its directional derivatives.

Every function accepts plain float arrays as well as object arrays of
:class:`~l1control.dual.Dual` numbers, so the Poisson-bracket engine can
differentiate through them.
"""
import enum
from dataclasses import dataclass

import numpy as np

from . import dual
from .errors import DomainError


class PotentialKind(enum.Enum):
    TWO_BODY = "two_body"


@dataclass(frozen=True)
class PotentialModel:
    """Central potential; ``mu`` is the gravitational parameter."""

    mu: float = 1.0
    kind: PotentialKind = PotentialKind.TWO_BODY

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


@dataclass(frozen=True)
class PhaseState:
    """Position/velocity pair ``(q, v)`` in the phase space TQ."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.q.shape != self.v.shape:
            raise ValueError("q and v must have the same shape")
        if np.linalg.norm(self.q) == 0:
            raise DomainError("phase state at the collision point q = 0")

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        m = x.shape[0] // 2
        return cls(x[:m], x[m:])

    def as_array(self):
        return np.concatenate([self.q, self.v])

    def is_admissible(self, model):
        """Negative energy and nonzero angular momentum."""
        h = np.cross(self.q, self.v)
        return energy(model, self) < 0 and np.linalg.norm(h) > 0


def _dot(a, b):
    acc = a[0] * b[0]
    for i in range(1, len(a)):
        acc = acc + a[i] * b[i]
    return acc


def _radius(q):
    r2 = _dot(q, q)
    if dual.value(r2) == 0.0:
        raise DomainError("potential evaluated at q = 0")
    return dual.sqrt(r2)


def eval_potential(model, q):
    return -model.mu / _radius(q)


def grad_potential(model, q):
    """Gravity gradient ``mu q / |q|^3`` (minus the acceleration)."""
    r = _radius(q)
    return model.mu * np.asarray(q) / r ** 3


def hessian_quadratic(model, q, w):
    """``V''(q) w^2 = mu (|w|^2/|q|^3 - 3 (w|q)^2/|q|^5)``."""
    r = _radius(q)
    wq = _dot(w, q)
    return model.mu * (_dot(w, w) / r ** 3 - 3.0 * wq * wq / r ** 5)


def hessian_matrix(model, q):
    q = np.asarray(q, dtype=float)
    r = float(_radius(q))
    return model.mu * (np.eye(len(q)) / r ** 3 - 3.0 * np.outer(q, q) / r ** 5)


def hessian_apply(model, q, w):
    """``V''(q) w`` as a vector; dual-friendly."""
    r = _radius(q)
    wq = _dot(w, q)
    return model.mu * (np.asarray(w) / r ** 3 - 3.0 * wq * np.asarray(q) / r ** 5)


def third_cubic(model, q, w):
    """``V'''(q) w^3 = mu (-9 (w|q)|w|^2/|q|^5 + 15 (w|q)^3/|q|^7)``."""
    return mixed_third(model, q, w, w, w)


def mixed_third(model, q, a, b, c):
    """Symmetric trilinear form ``V'''(q)(a, b, c)``."""
    r = _radius(q)
    qa, qb, qc = _dot(q, a), _dot(q, b), _dot(q, c)
    pairs = _dot(a, b) * qc + _dot(a, c) * qb + _dot(b, c) * qa
    return model.mu * (-3.0 * pairs / r ** 5 + 15.0 * qa * qb * qc / r ** 7)


def energy(model, x):
    """Keplerian energy ``|v|^2/2 + V(q)`` of a :class:`PhaseState`."""
    return 0.5 * _dot(x.v, x.v) + eval_potential(model, x.q)
