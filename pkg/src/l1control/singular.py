"""Order-two singular extremals of the two-body L1 problem.

On a singular arc ``H1 = H01 = H001 = H0001 = 0`` and the throttle is the
feedback solving ``H00001 + rho eps H10001 = 0``.  Minimizing arcs need
``V''(q) p_v^2 >= 0`` and ``V'''(q) p_v^3 > 0``; for the Kepler potential
this pins the angle between the thrust and the radial direction to
``cos(alpha)`` in ``[-1/sqrt(3), 0)``.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dual
from .errors import BracketDegenerate, DomainError, NoConvergence
from .hamiltonians import DEFAULT_MODEL, as_vector, bracket, make_brackets
from .potential import hessian_apply, hessian_quadratic, mixed_third, third_cubic

ALPHA0 = math.acos(1.0 / math.sqrt(3.0))  # ~0.955317 rad
CONSTRAINTS = ("H1", "H01", "H001", "H0001")


@dataclass(frozen=True)
class SingularClassification:
    on_locus: bool
    order_two: bool
    legendre_ok: bool
    domain_ok: bool
    rho_s: Optional[float]
    angle: Optional[float]
    residual: np.ndarray
    h10001: float


def constraints(z, model=DEFAULT_MODEL):
    return np.array([bracket(n, z, model) for n in CONSTRAINTS])


def domain_inequalities(z, model=DEFAULT_MODEL):
    """``(V''(q) p_v^2, V'''(q) p_v^3)``."""
    z = as_vector(z)
    q, pv = z[0:3], z[9:12]
    return float(hessian_quadratic(model, q, pv)), float(third_cubic(model, q, pv))


def classify(z, tol=1e-9, model=DEFAULT_MODEL, eps=1.0):
    z = as_vector(z)
    if np.linalg.norm(z[9:12]) == 0:
        raise DomainError("classification needs p_v != 0")
    res = constraints(z, model)
    on_locus = bool(np.max(np.abs(res)) <= tol)
    b4 = bracket("H10001", z, model)
    if on_locus and abs(b4) < 1e-12:
        raise BracketDegenerate(f"H10001 = {b4:.3e} on the locus: order above two")
    order_two = abs(b4) >= 1e-12
    rho_s = -bracket("H00001", z, model) / (eps * b4) if order_two else None
    v2, v3 = domain_inequalities(z, model)
    return SingularClassification(
        on_locus=on_locus,
        order_two=order_two,
        legendre_ok=bool(b4 <= 0),
        domain_ok=bool(v2 >= 0 and v3 > 0),
        rho_s=rho_s,
        angle=control_angle(z),
        residual=res,
        h10001=b4,
    )


def control_angle(z):
    """Signed angle between ``p_v`` and ``q``.

    The sign is that of ``(q x p_v | q x v)``, i.e. positive when the thrust
    leans along the direction of motion within the orbital plane.
    """
    z = as_vector(z)
    q, v, pv = z[0:3], z[3:6], z[9:12]
    nq, npv = np.linalg.norm(q), np.linalg.norm(pv)
    if nq == 0 or npv == 0:
        raise DomainError("angle undefined when q or p_v vanishes")
    c = float(np.clip(q @ pv / (nq * npv), -1.0, 1.0))
    alpha = math.acos(c)
    side = np.cross(q, pv) @ np.cross(q, v)
    return -alpha if side < 0 else alpha


def angle_window_check(z, model=DEFAULT_MODEL):
    """True iff ``cos(alpha)`` lies in ``[-1/sqrt(3), 0)``.

    That is ``|alpha|`` in ``(pi/2, pi - ALPHA0]``, equivalently
    ``1 - 3 cos^2 >= 0`` together with ``cos (3 - 5 cos^2) < 0``.
    """
    return angle_in_window(control_angle(z))


def angle_in_window(alpha):
    c = math.cos(alpha)
    return bool(1.0 - 3.0 * c * c >= -1e-15 and c * (3.0 - 5.0 * c * c) < 0)


def _constraint_jacobian(z, model):
    """Jacobian of the four constraints with respect to the costate."""
    brackets = make_brackets(model)
    rows = []
    for name in CONSTRAINTS:
        fn = brackets[name]
        rows.append(dual.gradient(fn, z)[6:12])
    return np.array(rows, dtype=float)


def locus_seek(seed, model=DEFAULT_MODEL, tol=1e-10, max_iter=50):
    """Project a costate onto the order-two locus, keeping ``(q, v)`` fixed.

    Newton steps use the minimum-norm solution of the underdetermined
    4 x 6 linearized system, so the point moves as little as possible.
    """
    z = np.array(as_vector(seed), dtype=float)
    res = constraints(z, model)
    if np.linalg.norm(res) > 0.1:
        raise ValueError(f"seed too far from the locus (residual {np.linalg.norm(res):.3g})")
    for it in range(max_iter + 1):
        if np.max(np.abs(res)) <= tol:
            return z, it
        if it == max_iter:
            break
        jac = _constraint_jacobian(z, model)
        step = np.linalg.lstsq(jac, res, rcond=None)[0]
        z[6:12] -= step
        res = constraints(z, model)
    raise NoConvergence(f"locus projection stalled at residual {np.max(np.abs(res)):.3e}",
                        best=z, diagnostics={"residual": res})


def seed_point(q, v, alpha, model=DEFAULT_MODEL):
    """Point on the locus with unit ``p_v`` at angle ``alpha`` in the orbit plane.

    ``p_q`` is orthogonal to ``p_v`` with ``|p_q|^2 = V'' p_v^2`` (first three
    constraints); its tilt out of the plane is solved from ``H0001 = 0``.
    Raises ``ValueError`` when no such tilt exists.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    e_r = q / np.linalg.norm(q)
    n = np.cross(q, v)
    n /= np.linalg.norm(n)
    e_t = np.cross(n, e_r)
    pv = math.cos(alpha) * e_r + math.sin(alpha) * e_t
    v2 = float(hessian_quadratic(model, q, pv))
    if v2 <= 0:
        raise ValueError("V'' p_v^2 <= 0: no singular point at this angle")
    t = np.cross(n, pv)
    # H0001 = -V'''(v, p_v, p_v) + 4 V''(p_q, p_v), and V''(n, p_v) = 0 in plane
    b = 4.0 * math.sqrt(v2) * float(hessian_apply(model, q, t) @ pv)
    c = float(mixed_third(model, q, v, pv, pv)) / b
    if abs(c) > 1:
        raise ValueError("H0001 = 0 has no solution for this seed")
    phi = math.acos(c)
    pq = math.sqrt(v2) * (math.cos(phi) * t + math.sin(phi) * n)
    return np.concatenate([q, v, pq, pv])
