"""Jacobi fields along extremals and the determinant test for conjugate points.

The variational block ``M = dz/dp0`` (12 x 6) is integrated together with
the extremal.  At a regular switching the fields jump by the rank-one
symplectic matrix ``sigma``; the no-fold test watches the sign of
``delta(t) = det dx/dp0``.

On bang arcs the flow is homogeneous of degree zero in the costate
direction: scaling ``p0`` leaves ``x(t)`` unchanged until the first switch.
Hence ``delta`` vanishes identically on the first arc and the scan starts
right after the first jump.
"""
import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import dual
from .errors import Inconclusive, RegularityViolation
from .flow import (
    ArcKind,
    Extremal,
    FlowSettings,
    _with_identity_block,
    bang_bang_core,
    extremal_rhs,
)
from .hamiltonians import DEFAULT_MODEL, as_vector, h01, h1_field

N = 6  # state dimension
J_CANONICAL = np.block([[np.zeros((N, N)), np.eye(N)], [-np.eye(N), np.zeros((N, N))]])


class Location(enum.Enum):
    AT_SWITCH = "AtSwitch"
    INTERIOR_OF_ARC = "InteriorOfArc"


@dataclass(frozen=True)
class SwitchJump:
    """``sigma = X_g dg^T / {H_pre, H_post}`` with ``g = H_pre - H_post``."""

    sigma: np.ndarray
    z_switch: np.ndarray
    h12: float
    t: Optional[float] = None


@dataclass
class JumpRecord:
    t: float
    arc_index: int  # index of the arc that starts at this switch
    jump: SwitchJump
    m_minus: np.ndarray
    m_plus: np.ndarray

    @property
    def delta_minus(self):
        return delta_det(self.m_minus)

    @property
    def delta_plus(self):
        return delta_det(self.m_plus)


@dataclass
class JacobiTrajectory:
    """Extremal with its Jacobi fields; ``arcs[k].ys`` carry ``vec(M)``."""

    extremal: Extremal
    jumps: list = field(default_factory=list)

    @property
    def arcs(self):
        return self.extremal.arcs

    def matrices(self, arc):
        return arc.ys[:, 12:].reshape(len(arc.ts), 12, N)

    def deltas(self, arc):
        return np.linalg.det(self.matrices(arc)[:, :N, :])

    def series(self):
        """``(t, delta, arc_index)`` with one-sided values at every jump."""
        ts, ds, idx = [], [], []
        for k, arc in enumerate(self.arcs):
            ts.append(arc.ts)
            ds.append(self.deltas(arc))
            idx.append(np.full(len(arc.ts), k))
        return np.concatenate(ts), np.concatenate(ds), np.concatenate(idx)

    def final_matrix(self):
        arc = self.arcs[-1]
        return arc.ys[-1, 12:].reshape(12, N)


@dataclass
class ConjugatePoint:
    t: float
    location: Location
    arc_index: int
    kind: ArcKind


@dataclass
class Certificate:
    holds: bool
    margin: float
    min_abs_h01: float
    details: dict = field(default_factory=dict)


# --- variational equations ------------------------------------------------------

def variational_rhs(z, rho, m, model=DEFAULT_MODEL, eps=1.0, engine="closed"):
    """``d/dt M = A(z) M`` with ``A`` the Jacobian of the extremal field.

    ``engine="closed"`` uses the compiled closed-form linearization,
    ``engine="dual"`` differentiates :func:`extremal_rhs` with dual numbers.
    Both must agree; the dual path serves as oracle.
    """
    z = as_vector(z)
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if engine == "dual":
        a = dual.jacobian(lambda w: extremal_rhs(w, rho, model, eps), z)
        return a @ m
    if engine != "closed":
        raise ValueError(f"unknown engine {engine!r}")
    ncol = m.shape[1]
    y = np.concatenate([z, m.ravel()])
    out = np.empty_like(y)
    K.rhs(y, model.mu, eps, K.MODE_FIXED, float(rho), ncol, out)
    return out[12:].reshape(12, ncol)


def jump_matrix(z_switch, ordering, eps=1.0, threshold=1e-8, t=None):
    """Jump of the Jacobi fields at a switching between coast and burn.

    ``ordering`` is ``"coast->burn"`` or ``"burn->coast"``.  The pre-switch
    Hamiltonian plays the part of the first flow: with
    ``g = H_pre - H_post`` and ``h12 = {H_pre, H_post}``,
    ``sigma = X_g dg^T / h12``.  Both orderings reduce to
    ``eps X_H1 dH1^T / |H01|`` at a regular switching.
    """
    z = as_vector(z_switch)
    b = float(h01(z))
    if ordering == "coast->burn":
        s_g, h12 = -1.0, eps * b  # g = -eps H1, {H0, H0 + eps H1} = eps H01
    elif ordering == "burn->coast":
        s_g, h12 = 1.0, -eps * b
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    if abs(b) < threshold:
        raise RegularityViolation(f"|H01| = {abs(b):.3e} below threshold {threshold}")
    grad_h1 = np.zeros(12)
    grad_h1[9:12] = z[9:12] / np.linalg.norm(z[9:12])
    xg = s_g * eps * h1_field(z)
    dg = s_g * eps * grad_h1
    sigma = np.outer(xg, dg) / h12
    return SwitchJump(sigma, z, h12, t)


def _ordering(rho_before):
    return "burn->coast" if rho_before == 1.0 else "coast->burn"


def propagate_jacobi(source, t_span=None, eps=None, model=DEFAULT_MODEL,
                     settings=FlowSettings()):
    """Bang-bang extremal with its Jacobi fields ``dz/dp0`` and jumps.

    ``source`` is an :class:`Extremal` (re-propagated from its start with
    the variational block attached) or a raw 12-vector with ``t_span``.
    """
    if isinstance(source, Extremal):
        z0 = source.z0.as_array()
        t_span = (source.t_start, source.t_end)
        eps = source.eps if eps is None else eps
    else:
        z0 = as_vector(source)
        if t_span is None:
            raise ValueError("t_span is required when starting from a point")
        eps = 1.0 if eps is None else eps
    y0 = _with_identity_block(z0, N)
    jumps = []
    state = {"arcs": 0}

    def on_switch(t, y, rho_before):
        m = y[12:].reshape(12, N)
        jmp = jump_matrix(y[:12], _ordering(rho_before), eps, settings.h01_threshold, t)
        m_minus = m.copy()
        m += jmp.sigma @ m
        state["arcs"] += 1
        jumps.append(JumpRecord(t, state["arcs"], jmp, m_minus, m.copy()))

    arcs, switches, psi = bang_bang_core(
        y0, t_span[0], t_span[1], eps, model.mu, settings, N, on_switch)
    ext = Extremal(arcs, switches, psi, eps, model.mu)
    return JacobiTrajectory(ext, jumps)


def propagate_jacobi_regularized(z0, t_span, lam, eps=1.0, model=DEFAULT_MODEL,
                                 settings=FlowSettings()):
    from .flow import propagate_regularized

    ext = propagate_regularized(z0, t_span, lam, eps, model, settings, ncol=N)
    return JacobiTrajectory(ext, [])


def delta_det(m):
    """``det dx/dp0`` from a 12 x 6 Jacobi block."""
    m = np.asarray(m, dtype=float)
    return float(np.linalg.det(m[:N, :]))


def eq2_ratio(z_switch, m_minus, ordering, eps=1.0):
    """Scalar jump factor ``delta(t1+)/delta(t1-)``.

    ``1 + (dt1/dp0) (dx1/dp0)^{-1} grad_p g`` with ``dt1/dp0`` from the
    implicit function theorem on ``g(z(t1)) = 0``.  Requires
    ``delta(t1-) != 0``.
    """
    jmp = jump_matrix(z_switch, ordering, eps, threshold=0.0)
    z = as_vector(z_switch)
    s_g = -1.0 if ordering == "coast->burn" else 1.0
    grad_g = np.zeros(12)
    grad_g[9:12] = s_g * eps * z[9:12] / np.linalg.norm(z[9:12])
    dt1 = grad_g @ m_minus / jmp.h12
    xg_x = (s_g * eps * h1_field(z))[:N]
    return 1.0 + dt1 @ np.linalg.solve(m_minus[:N], xg_x)


# --- conjugate point scan ---------------------------------------------------------

def _refine_interior(arc, k, eps, mu, ncol=N):
    """Root of delta on ``[ts[k], ts[k+1]]`` through single kernel steps."""
    y = arc.ys[k]
    h = arc.ts[k + 1] - arc.ts[k]
    rho = float(arc.rho[k])

    def f(s):
        ys = K.single_step(y, s, mu, eps, K.MODE_FIXED, rho, ncol)
        return delta_det(ys[12:].reshape(12, ncol))

    fa = delta_det(arc.ys[k, 12:].reshape(12, ncol))
    fb = f(h)
    if fa * fb > 0:
        return float(arc.ts[k] + 0.5 * h)
    s = brentq(f, 0.0, h, xtol=1e-15, rtol=1e-14)
    return float(arc.ts[k] + s)


def conjugate_scan(jac, t_end=None, noise=1e-3, t_eps=1e-6):
    """First sign change of ``delta`` after the first switching.

    Returns ``None`` or a :class:`ConjugatePoint`.  A sign change between
    the one-sided values at a jump is located ``AT_SWITCH``; one inside an
    arc is refined by root finding and reported ``INTERIOR_OF_ARC``.
    If ``|delta|`` falls below ``noise`` times its running maximum and
    recovers with the same sign, :class:`Inconclusive` is raised.
    """
    ext = jac.extremal
    t0 = ext.t_start
    if t_end is None:
        t_end = ext.t_end
    running = 0.0
    prev = None  # (sign, t)
    dipped = None
    for k, arc in enumerate(jac.arcs):
        if k == 0:
            continue  # delta vanishes identically before the first switch
        ds = jac.deltas(arc)
        for i, (t, d) in enumerate(zip(arc.ts, ds)):
            if abs(t - t0) < t_eps:
                continue
            if t > t_end + 1e-14:
                return None
            sgn = np.sign(d)
            if prev is not None and sgn != 0 and sgn != prev[0]:
                if i == 0:
                    return ConjugatePoint(float(t), Location.AT_SWITCH, k, arc.kind)
                tc = _refine_interior(arc, i - 1, ext.eps, ext.mu)
                if tc > t_end:
                    return None
                return ConjugatePoint(tc, Location.INTERIOR_OF_ARC, k, arc.kind)
            running = max(running, abs(d))
            low = abs(d) < noise * running
            if low and dipped is None:
                dipped = float(t)
            elif not low and dipped is not None:
                raise Inconclusive(
                    f"delta touched the noise floor near t = {dipped:.12g} "
                    f"without a sign change", dipped,
                    {"noise": noise, "running_max": running})
            if sgn != 0:
                prev = (sgn, t)
    if dipped is not None:
        raise Inconclusive(f"delta ends inside the noise floor (since t = {dipped:.12g})",
                           dipped, {"noise": noise, "running_max": running})
    return None


def check_A2(jac, t_f=None, threshold=1e-8, noise=1e-3):
    """No-fold certificate on ``(0, t_f]`` plus regularity of every switching."""
    ext = jac.extremal
    if t_f is None:
        t_f = ext.t_end
    sw = [s for s in ext.switches if s.t <= t_f]
    min_h01 = min((abs(s.h01) for s in sw), default=np.inf)
    cp = conjugate_scan(jac, t_end=t_f, noise=noise)
    ts, ds, idx = jac.series()
    mask = (idx > 0) & (ts <= t_f)
    if mask.any():
        margin = float(np.min(np.abs(ds[mask])) / np.max(np.abs(ds[mask])))
    else:
        margin = 0.0
    same_sign = all(j.delta_minus * j.delta_plus > 0 for j in jac.jumps[1:] if j.t <= t_f)
    holds = cp is None and min_h01 > threshold and same_sign
    details = {
        "n_switches": len(sw),
        "conjugate_point": cp,
        "jump_signs_preserved": same_sign,
    }
    return Certificate(bool(holds), margin, float(min_h01), details)


def smooth_disconjugacy(z0, t_f, lam, eps=1.0, model=DEFAULT_MODEL,
                        settings=FlowSettings(), t_eps=1e-3, noise=1e-3):
    """Invertibility of ``dx/dp0`` along a regularized extremal on ``(t_eps, t_f]``.

    The scan is a sign and rank test on ``delta``.  A sign change fails the
    certificate; a dip below ``noise`` times the running maximum raises
    :class:`Inconclusive`.
    """
    jac = propagate_jacobi_regularized(z0, (0.0, t_f), lam, eps, model, settings)
    arc = jac.arcs[0]
    ds = jac.deltas(arc)
    mask = arc.ts > t_eps
    d = ds[mask]
    if len(d) == 0:
        raise ValueError("no samples beyond t_eps")
    running = np.maximum.accumulate(np.abs(d))
    sign_change = bool(np.any(np.sign(d) != np.sign(d[0])))
    margin = float(np.min(np.abs(d) / running))
    if not sign_change and margin < noise:
        raise Inconclusive("delta approaches zero on the smooth extremal",
                           float(arc.ts[mask][np.argmin(np.abs(d) / running)]),
                           {"margin": margin})
    details = {"trajectory": jac, "min_rank_sv": _min_singular(jac.matrices(arc)[mask])}
    return Certificate(not sign_change, margin, np.inf, details)


def _min_singular(ms):
    return float(min(np.linalg.svd(m[:N], compute_uv=False)[-1] for m in ms))


def symplectic_defect(phi):
    """``|Phi^T J Phi - J|_max`` for a 12 x 12 transition matrix."""
    return float(np.max(np.abs(phi.T @ J_CANONICAL @ phi - J_CANONICAL)))
