"""Propagation of extremals: bang-bang, regularized and singular arcs.

Bang-bang and regularized flows run on the compiled DOP853 kernel in
:mod:`l1control._kernels`.  Switchings are zeros of ``H1 = |p_v| - 1``
located by root refinement on the step map; singular arcs use scipy's
integrator with the order-two feedback evaluated by the bracket engine.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels as K
from .errors import (
    ChatteringSuspected,
    DomainError,
    FeedbackOutOfRange,
    SingularContact,
    SingularEscape,
    StepFailure,
)
from .hamiltonians import (
    DEFAULT_MODEL,
    ExtremalPoint,
    as_vector,
    bracket,
    hamiltonian_field,
)

log = logging.getLogger(__name__)


class ArcKind(enum.Enum):
    COAST = "coast"
    BURN = "burn"
    SINGULAR = "singular"
    REGULARIZED = "regularized"


@dataclass(frozen=True)
class FlowSettings:
    # near round-off: the shooting residual must resolve below 1e-9 after
    # twenty revolutions, and step control sees the extremal only
    rtol: float = 3e-14
    atol: float = 3e-14
    event_tol: float = 1e-13  # |H1| at a located switching
    h01_threshold: float = 1e-8  # regularity of switchings
    min_switch_gap: float = 1e-9  # below this, suspect chattering
    max_steps: int = 1_000_000
    locus_tol: float = 1e-8  # singular arcs: admissible start residual
    drift_tol: float = 1e-6  # singular arcs: admissible constraint drift


@dataclass
class Arc:
    """One arc with its accepted integration samples.

    ``ys`` rows are ``(z, vec(M))``: the 12 extremal coordinates followed by
    an optional row-major variational block.
    """

    kind: ArcKind
    ts: np.ndarray
    ys: np.ndarray
    rho: np.ndarray
    lam: Optional[float] = None

    @property
    def t_start(self):
        return float(self.ts[0])

    @property
    def t_end(self):
        return float(self.ts[-1])

    @property
    def z_start(self):
        return ExtremalPoint.from_array(self.ys[0, :12])

    @property
    def z_end(self):
        return ExtremalPoint.from_array(self.ys[-1, :12])

    @property
    def zs(self):
        return self.ys[:, :12]

    @property
    def duration(self):
        return abs(self.t_end - self.t_start)


@dataclass(frozen=True)
class Switch:
    t: float
    z: ExtremalPoint
    h01: float
    before: ArcKind
    after: ArcKind


@dataclass
class Extremal:
    arcs: list
    switches: list = field(default_factory=list)
    psi_zeros: list = field(default_factory=list)
    eps: float = 1.0
    mu: float = 1.0

    @property
    def switch_times(self):
        return [s.t for s in self.switches]

    @property
    def t_start(self):
        return self.arcs[0].t_start

    @property
    def t_end(self):
        return self.arcs[-1].t_end

    @property
    def z0(self):
        return self.arcs[0].z_start

    @property
    def z_end(self):
        return self.arcs[-1].z_end

    def samples(self):
        """Concatenated ``(ts, zs, rho)``; junction points appear twice."""
        ts = np.concatenate([a.ts for a in self.arcs])
        zs = np.concatenate([a.zs for a in self.arcs])
        rho = np.concatenate([a.rho for a in self.arcs])
        return ts, zs, rho

    def burn_time(self):
        """``int rho dt`` by the trapezoidal rule on every arc."""
        total = 0.0
        for a in self.arcs:
            if a.kind is ArcKind.BURN:
                total += a.duration
            elif a.kind is not ArcKind.COAST:
                total += abs(float(np.trapezoid(a.rho, a.ts)))
        return total


# --- vector field -------------------------------------------------------------

def extremal_rhs(z, rho, model=DEFAULT_MODEL, eps=1.0):
    """Hamiltonian vector field of ``H0 + rho eps H1`` with ``w = p_v/|p_v|``.

    ``q' = v``, ``v' = -grad V + rho eps w``, ``p_q' = V''(q) p_v``,
    ``p_v' = -p_q``.
    """
    z = as_vector(z)
    if rho < 0 or rho > 1:
        raise ValueError(f"throttle must lie in [0, 1], got {rho}")
    return hamiltonian_field(z, rho, model, eps)


# --- bang-bang ------------------------------------------------------------------

def _initial_throttle(z, direction):
    s = np.linalg.norm(z[9:12])
    g = s - 1.0
    if g > 0:
        return 1.0
    if g < 0:
        return 0.0
    h01 = -(z[6:9] @ z[9:12]) / s
    if h01 == 0:
        raise SingularContact("start on the switching surface with H01 = 0", 0.0, 0.0)
    return 1.0 if h01 * direction > 0 else 0.0


def _kind(rho):
    return ArcKind.BURN if rho == 1.0 else ArcKind.COAST


def _check_status(status, t):
    if status == K.STATUS_STEP_FAILURE:
        raise StepFailure(f"step size underflow at t = {t:.15g}")
    if status == K.STATUS_MAX_STEPS:
        raise StepFailure(f"maximum number of steps reached at t = {t:.15g}")


def _psi_zeros(ts, ys):
    """Times where the direction of p_v flips between consecutive samples."""
    pv = ys[:, 9:12]
    out = []
    for k in range(len(ts) - 1):
        if pv[k] @ pv[k + 1] < 0:
            j = k if np.linalg.norm(pv[k]) < np.linalg.norm(pv[k + 1]) else k + 1
            out.append(float(ts[j]))
    return out


def bang_bang_core(y0, t0, t1, eps, mu, settings, ncol=0, on_switch=None):
    """Concatenate bang arcs from ``y0``; returns ``(arcs, switches, psi)``.

    ``on_switch(t, y, rho_before)`` may modify ``y`` in place (used to apply
    jumps to a variational block).
    """
    y = np.array(y0, dtype=float)
    direction = 1.0 if t1 >= t0 else -1.0
    rho = _initial_throttle(y[:12], direction)
    t = float(t0)
    h = 0.0
    arcs, switches, psi = [], [], []
    while True:
        sign = 1 if rho == 1.0 else -1
        ts, ys, status, h = K.integrate(
            y, t, t1, mu, eps, K.MODE_FIXED, rho, ncol, settings.rtol,
            settings.atol, h, sign, settings.event_tol, settings.max_steps)
        _check_status(status, ts[-1])
        arcs.append(Arc(_kind(rho), ts, ys, np.full(len(ts), rho)))
        if rho == 0.0:
            psi.extend(_psi_zeros(ts, ys))
        y = ys[-1].copy()
        t = float(ts[-1])
        if status == K.STATUS_DONE:
            break
        pv = y[9:12]
        s = np.linalg.norm(pv)
        h01 = -(y[6:9] @ pv) / s
        if abs(h01) < settings.h01_threshold:
            raise SingularContact(
                f"switching at t = {t:.15g} with |H01| = {abs(h01):.3e} below "
                f"the regularity threshold", t, h01)
        if switches and abs(t - switches[-1].t) < settings.min_switch_gap:
            raise ChatteringSuspected(
                f"switchings accumulate near t = {t:.15g} (Fuller phenomenon); "
                f"chattering arcs are not synthesized")
        new_rho = 1.0 - rho
        switches.append(Switch(t, ExtremalPoint.from_array(y[:12]), float(h01),
                               _kind(rho), _kind(new_rho)))
        if on_switch is not None:
            on_switch(t, y, rho)
        rho = new_rho
        h = 0.0
    for tz in psi:
        log.info("p_v = 0 crossing near t = %.12g: thrust direction flips", tz)
    return arcs, switches, psi


def propagate_bang_bang(z0, t_span, eps=1.0, model=DEFAULT_MODEL,
                        settings=FlowSettings()):
    """Bang-bang extremal through ``z0`` on ``t_span`` (either direction)."""
    z0 = as_vector(z0)
    if np.linalg.norm(z0[:3]) == 0:
        raise DomainError("initial position at q = 0")
    t0, t1 = map(float, t_span)
    arcs, switches, psi = bang_bang_core(z0, t0, t1, eps, model.mu, settings)
    return Extremal(arcs, switches, psi, eps, model.mu)


# --- regularized -----------------------------------------------------------------

def regularized_rho(zs, lam):
    s = np.linalg.norm(np.atleast_2d(zs)[:, 9:12], axis=1)
    return np.clip((s - lam) / (2.0 * (1.0 - lam)), 0.0, 1.0)


def propagate_regularized(z0, t_span, lam, eps=1.0, model=DEFAULT_MODEL,
                          settings=FlowSettings(), ncol=0):
    """Smooth flow of the maximized Hamiltonian for the cost ``lam rho + (1-lam) rho^2``."""
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"regularized flow needs 0 <= lambda < 1, got {lam}")
    z0 = as_vector(z0)
    if np.linalg.norm(z0[:3]) == 0:
        raise DomainError("initial position at q = 0")
    y0 = _with_identity_block(z0, ncol)
    t0, t1 = map(float, t_span)
    ts, ys, status, _ = K.integrate(
        y0, t0, t1, model.mu, eps, K.MODE_REGULARIZED, lam, ncol, settings.rtol,
        settings.atol, 0.0, 0, settings.event_tol, settings.max_steps)
    _check_status(status, ts[-1])
    arc = Arc(ArcKind.REGULARIZED, ts, ys, regularized_rho(ys, lam), lam)
    psi = _psi_zeros(ts, ys)
    return Extremal([arc], [], psi, eps, model.mu)


def _with_identity_block(z0, ncol):
    """Append ``d(z)/d(p0)`` initial data: zero state rows, identity costate rows."""
    y0 = np.zeros(12 + 12 * ncol)
    y0[:12] = z0
    if ncol:
        m = np.zeros((12, ncol))
        m[6:, :] = np.eye(6)[:, :ncol]
        y0[12:] = m.ravel()
    return y0


# --- singular ------------------------------------------------------------------

SINGULAR_CONSTRAINTS = ("H1", "H01", "H001", "H0001")


def singular_constraints(z, model=DEFAULT_MODEL):
    return np.array([bracket(n, z, model) for n in SINGULAR_CONSTRAINTS])


def singular_feedback(z, eps=1.0, model=DEFAULT_MODEL):
    """``rho_s`` solving ``H00001 + rho eps H10001 = 0``."""
    return -bracket("H00001", z, model) / (eps * bracket("H10001", z, model))


def propagate_singular(z0, t_span, eps=1.0, model=DEFAULT_MODEL,
                       settings=FlowSettings()):
    """Integral curve of ``H0 + rho_s eps H1`` from an order-two locus point."""
    z0 = as_vector(z0)
    c0 = singular_constraints(z0, model)
    if np.max(np.abs(c0)) > settings.locus_tol:
        raise ValueError(f"start point is off the singular locus (residual {c0})")
    if abs(bracket("H10001", z0, model)) < 1e-12:
        raise ValueError("H10001 vanishes: not an order-two singular point")

    def rhs(t, z):
        rho = singular_feedback(z, eps, model)
        if not 0.0 <= rho <= 1.0:
            raise FeedbackOutOfRange(
                f"singular feedback rho_s = {rho:.6g} left [0, 1] at t = {t:.12g}")
        return hamiltonian_field(z, rho, model, eps)

    sol = solve_ivp(rhs, t_span, z0, method="DOP853", rtol=settings.rtol,
                    atol=settings.atol)
    if not sol.success:
        raise StepFailure(sol.message)
    zs = sol.y.T
    for t, z in zip(sol.t, zs):
        drift = np.max(np.abs(singular_constraints(z, model)))
        if drift > settings.drift_tol:
            raise SingularEscape(
                f"singular constraints drifted to {drift:.3e} at t = {t:.12g}")
    rho = np.array([singular_feedback(z, eps, model) for z in zs])
    arc = Arc(ArcKind.SINGULAR, sol.t, zs, rho)
    return Extremal([arc], [], [], eps, model.mu)

