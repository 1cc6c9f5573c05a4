"""Single shooting, damped Newton and the energy-to-L1 homotopy.

The unknown is the initial costate ``p0 = (p_q, p_v)(0)``.  The endpoint
condition is ``x(t_f) = x_f`` in canonical Cartesian coordinates.  Along the
homotopy, Newton works on an equivalent orbital-element form of the same
condition (squared angular momentum, eccentricity vector, orbit normal and
cumulative longitude), which is far less nonlinear over many revolutions.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    NoConvergence,
    PropagationError,
    SingularJacobian,
    StallAtLambda,
)
from .flow import Extremal, FlowSettings, propagate_bang_bang, propagate_regularized
from .jacobi import propagate_jacobi
from .potential import PhaseState, PotentialModel

log = logging.getLogger(__name__)

KM_PER_M = 1e-3
SECONDS_PER_HOUR = 3600.0


# --- problem data ---------------------------------------------------------------

@dataclass(frozen=True)
class UnitScales:
    """Canonical units: ``length_km`` and ``mu_km3s2`` fix the time unit."""

    length_km: float
    mu_km3s2: float

    @property
    def time_s(self):
        return math.sqrt(self.length_km ** 3 / self.mu_km3s2)

    @property
    def time_h(self):
        return self.time_s / SECONDS_PER_HOUR

    @property
    def accel_kms2(self):
        return self.length_km / self.time_s ** 2

    def to_hours(self, t):
        return t * self.time_h

    def from_hours(self, hours):
        return hours / self.time_h


@dataclass(frozen=True)
class TransferProblem:
    """Fixed-endpoint, fixed-time transfer in canonical units."""

    model: PotentialModel
    x0: PhaseState
    xf: PhaseState
    t_f: float
    thrust_accel: float
    unit_scales: UnitScales
    longitude_0: float = 0.0  # cumulative longitude of x0
    longitude_f: Optional[float] = None  # cumulative longitude of xf

    def __post_init__(self):
        if not self.t_f > 0:
            raise ValueError("final time must be positive")
        if not self.thrust_accel > 0:
            raise ValueError("thrust acceleration must be positive")
        if np.allclose(self.x0.as_array(), self.xf.as_array()):
            raise ValueError("initial state already equals the target")
        for name in ("x0", "xf"):
            if not getattr(self, name).is_admissible(self.model):
                raise ValueError(f"{name} is not a bounded Keplerian state")

    @property
    def eps(self):
        return self.thrust_accel

    @property
    def target_longitude(self):
        if self.longitude_f is not None:
            return self.longitude_f
        q = self.xf.q
        return math.atan2(q[1], q[0])

    @classmethod
    def table1(cls):
        """Medium-thrust transfer to the geostationary orbit."""
        return cls.from_config(default_config())

    @classmethod
    def from_config(cls, cfg):
        return problem_from_config(cfg)

    def perturbed(self, magnitude, seed):
        """Endpoints shifted by random vectors of norm ``magnitude`` each."""
        rng = np.random.default_rng(seed)
        d0 = rng.normal(size=6)
        df = rng.normal(size=6)
        x0 = self.x0.as_array() + magnitude * d0 / np.linalg.norm(d0)
        xf = self.xf.as_array() + magnitude * df / np.linalg.norm(df)
        return replace(self, x0=PhaseState.from_array(x0), xf=PhaseState.from_array(xf))


def elements_to_state(perigee, apogee, inclination, longitude, mu=1.0):
    """Cartesian state on the ellipse with zero node and perigee arguments."""
    if not 0 < perigee <= apogee:
        raise ValueError("need 0 < perigee <= apogee")
    if not 0 <= inclination < math.pi:
        raise ValueError("inclination must lie in [0, pi)")
    a = 0.5 * (perigee + apogee)
    e = (apogee - perigee) / (apogee + perigee)
    p = a * (1.0 - e * e)
    nu = longitude
    r = p / (1.0 + e * math.cos(nu))
    q = np.array([r * math.cos(nu), r * math.sin(nu), 0.0])
    v = math.sqrt(mu / p) * np.array([-math.sin(nu), e + math.cos(nu), 0.0])
    ci, si = math.cos(inclination), math.sin(inclination)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, ci, -si], [0.0, si, ci]])
    return PhaseState(rot @ q, rot @ v)


def default_config():
    return {
        "units": {"length": "km", "time": "h", "mass": "kg", "force": "N"},
        "constants": {"mu": 398600.47, "length_unit": 42165.0, "mass": 1500.0,
                      "thrust": 10.0},
        "initial_orbit": {"perigee": 6643.0, "apogee": 46500.0,
                          "inclination": 0.1222, "longitude": math.pi},
        "final_orbit": {"perigee": 42165.0, "apogee": 42165.0,
                        "inclination": 0.0, "longitude": 56.659},
        "final_time": 147.28,
        "solver": {"tol": 1e-10, "rtol": 3e-14, "lambda_schedule": "adaptive"},
        "scan": {"extend_factor": 3.5, "perturb": 0.0, "seed": 0},
    }


_LENGTH = {"km": 1.0, "m": 1e-3}
_TIME = {"s": 1.0, "h": 3600.0, "hours": 3600.0}


def problem_from_config(cfg):
    try:
        units = cfg.get("units", {})
        lf = _LENGTH[units.get("length", "km")]
        tf_scale = _TIME[units.get("time", "h")]
        c = cfg["constants"]
        mu = float(c["mu"]) * lf ** 3  # km^3/s^2
        length_unit = float(c.get("length_unit", 42165.0)) * lf
        scales = UnitScales(length_unit, mu)
        accel_kms2 = float(c["thrust"]) / float(c["mass"]) * KM_PER_M
        eps = accel_kms2 / scales.accel_kms2
        states = []
        longs = []
        for key in ("initial_orbit", "final_orbit"):
            o = cfg[key]
            if "q" in o:
                q = np.asarray(o["q"], dtype=float) * lf / length_unit
                v = np.asarray(o["v"], dtype=float) * lf * scales.time_s / length_unit
                states.append(PhaseState(q, v))
                longs.append(o.get("longitude"))
            else:
                states.append(elements_to_state(
                    float(o["perigee"]) * lf / length_unit,
                    float(o["apogee"]) * lf / length_unit,
                    float(o["inclination"]), float(o["longitude"])))
                longs.append(float(o["longitude"]))
        t_f = float(cfg["final_time"]) * tf_scale / scales.time_s
    except KeyError as exc:
        raise ValueError(f"missing or unknown configuration entry: {exc}") from None
    except (TypeError, AttributeError) as exc:
        raise ValueError(f"malformed configuration: {exc}") from None
    lon0 = longs[0] if longs[0] is not None else math.atan2(states[0].q[1], states[0].q[0])
    return TransferProblem(PotentialModel(1.0), states[0], states[1], t_f, eps, scales,
                           float(lon0), longs[1])


# --- residuals ------------------------------------------------------------------

@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10  # Cartesian endpoint residual
    element_tol: float = 1e-9  # element residual along the homotopy
    max_iter: int = 100
    min_alpha: float = 2.0 ** -10
    flow: FlowSettings = field(default_factory=FlowSettings)
    step_iter: int = 12  # Newton budget per continuation step
    lam_step: float = 0.1
    lam_min_step: float = 1e-4
    lam_max_step: float = 0.2
    lam_growth: float = 1.5
    lam_last: float = 0.9999  # last regularized value before bang-bang


def _start(problem, p0):
    return np.concatenate([problem.x0.as_array(), np.asarray(p0, dtype=float)])


def _propagate(problem, p0, lam, settings, jacobian):
    z0 = _start(problem, p0)
    span = (0.0, problem.t_f)
    if lam >= 1.0:
        if jacobian:
            jac = propagate_jacobi(z0, span, problem.eps, problem.model, settings)
            return jac.extremal, jac.final_matrix()[:6]
        return propagate_bang_bang(z0, span, problem.eps, problem.model, settings), None
    ext = propagate_regularized(z0, span, lam, problem.eps, problem.model, settings,
                                ncol=6 if jacobian else 0)
    m = ext.arcs[-1].ys[-1, 12:].reshape(12, 6)[:6] if jacobian else None
    return ext, m


def shooting_residual(p0, problem, lam, settings=SolverSettings(), jacobian=False):
    """``x(t_f) - x_f``; with ``jacobian=True`` also ``dx(t_f)/dp0``."""
    ext, m = _propagate(problem, p0, lam, settings.flow, jacobian)
    r = ext.z_end.x - problem.xf.as_array()
    return (r, m) if jacobian else r


def orbit_elements(x, lon):
    """Smooth endpoint coordinates: ``(|h|^2, e_x, e_y, n_x, n_y, L)``."""
    q, v = x[:3], x[3:6]
    h = np.cross(q, v)
    hn = np.linalg.norm(h)
    e = np.cross(v, h) - q / np.linalg.norm(q)
    return np.array([hn * hn, e[0], e[1], h[0] / hn, h[1] / hn, lon])


def _cumulative_longitude(ys, lon0):
    ang = np.unwrap(np.arctan2(ys[:, 1], ys[:, 0]))
    return ang[-1] - ang[0] + lon0


def _element_jacobian(x, lon):
    """``d elements / dx`` by central differences (longitude via atan2)."""
    jac = np.zeros((6, 6))
    step = 1e-7
    for k in range(6):
        dx = np.zeros(6)
        dx[k] = step
        ep = orbit_elements(x + dx, 0.0)
        em = orbit_elements(x - dx, 0.0)
        jac[:5, k] = (ep[:5] - em[:5]) / (2 * step)
    q = x[:3]
    r2 = q[0] ** 2 + q[1] ** 2
    jac[5, 0] = -q[1] / r2
    jac[5, 1] = q[0] / r2
    return jac


def element_residual(p0, problem, lam, target, settings=SolverSettings(), jacobian=True):
    """Residual in orbit-element space against ``target`` (6-vector)."""
    ext, m = _propagate(problem, p0, lam, settings.flow, jacobian)
    ys = np.concatenate([a.ys[:, :6] for a in ext.arcs])
    lon = _cumulative_longitude(ys, problem.longitude_0)
    xf = ys[-1]
    r = orbit_elements(xf, lon) - target
    if not jacobian:
        return r
    return r, _element_jacobian(xf, lon) @ m


def target_elements(problem):
    return orbit_elements(problem.xf.as_array(), problem.target_longitude)


# --- Newton ---------------------------------------------------------------------------

@dataclass
class SolverSolution:
    p0: np.ndarray
    extremal: Extremal
    l1_cost: float  # int rho dt, canonical time units
    l1_cost_hours: float
    burn_fraction: float
    residual_norm: float
    lam: float = 1.0
    iterations: int = 0
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _newton(fun, p0, tol, max_iter, min_alpha):
    """Damped Newton with backtracking on ``|r|``; returns ``(p, |r|, iters, log)``."""
    p = np.asarray(p0, dtype=float).copy()
    history = []
    r, jac = fun(p, True)
    nr = float(np.linalg.norm(r))
    for it in range(max_iter + 1):
        history.append(nr)
        if nr <= tol:
            return p, nr, it, history
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError:
            raise SingularJacobian("shooting Jacobian is singular", best=p,
                                   diagnostics={"history": history}) from None
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("non-finite Newton step", best=p,
                                   diagnostics={"history": history})
        alpha = 1.0
        while alpha >= min_alpha:
            trial = p - alpha * step
            try:
                r_t, j_t = fun(trial, True)
                nr_t = float(np.linalg.norm(r_t))
                if nr_t < (1.0 - 1e-4 * alpha) * nr:
                    break
            except PropagationError:
                pass
            alpha *= 0.5
        if alpha < min_alpha:
            raise NoConvergence(f"line search failed at |r| = {nr:.3e}", best=p,
                                diagnostics={"history": history})
        p, r, jac, nr = trial, r_t, j_t, nr_t
    raise NoConvergence(f"no convergence in {max_iter} iterations (|r| = {nr:.3e})",
                        best=p, diagnostics={"history": history})


def _solution(problem, p0, ext, lam, nr, iters, history=None):
    burn = ext.burn_time()
    return SolverSolution(
        p0=np.asarray(p0, dtype=float),
        extremal=ext,
        l1_cost=burn,
        l1_cost_hours=problem.unit_scales.to_hours(burn),
        burn_fraction=burn / problem.t_f,
        residual_norm=nr,
        lam=lam,
        iterations=iters,
        history=list(history or []),
    )


def newton_solve(problem, p0_guess, lam, settings=SolverSettings(), residual="cartesian",
                 target=None, tol=None, max_iter=None):
    """Solve the shooting equations at fixed ``lam`` (``1`` means bang-bang)."""
    if residual == "cartesian":
        def fun(p, jac):
            return shooting_residual(p, problem, lam, settings, jacobian=jac)
        tol = settings.tol if tol is None else tol
    elif residual == "elements":
        tgt = target_elements(problem) if target is None else target

        def fun(p, jac):
            return element_residual(p, problem, lam, tgt, settings, jacobian=jac)
        tol = settings.element_tol if tol is None else tol
    else:
        raise ValueError(f"unknown residual {residual!r}")
    max_iter = settings.max_iter if max_iter is None else max_iter
    p, nr, iters, hist = _newton(fun, p0_guess, tol, max_iter, settings.min_alpha)
    ext, _ = _propagate(problem, p, lam, settings.flow, False)
    return _solution(problem, p, ext, lam, nr, iters, hist)


# --- homotopies --------------------------------------------------------------------

def _march(step_fn, p_start, s_start, s_end, step0, settings, what):
    """Adaptive continuation in a scalar parameter with a secant predictor."""
    p, s = np.asarray(p_start, dtype=float), s_start
    p_prev, s_prev = None, None
    ds = step0
    log_ = []
    while s < s_end:
        s_new = min(s_end, s + ds)
        if p_prev is not None:
            guess = p + (p - p_prev) * (s_new - s) / (s - s_prev)
        else:
            guess = p
        try:
            sol = step_fn(guess, s_new)
        except (NoConvergence, PropagationError) as exc:
            ds *= 0.5
            log.debug("%s step to %.6g failed (%s); step -> %.3g", what, s_new, exc, ds)
            if ds < settings.lam_min_step:
                raise StallAtLambda(f"{what} stalled at {s:.6g}", lam=s, p0=p) from None
            continue
        p_prev, s_prev = p, s
        p, s = sol.p0, s_new
        log_.append((s, sol.iterations, sol.residual_norm, sol.l1_cost))
        if sol.iterations <= 4:
            ds = min(settings.lam_max_step, ds * settings.lam_growth)
    return p, log_


def energy_start(problem, settings=SolverSettings()):
    """Converged ``lam = 0`` costate by a homotopy on the target orbit.

    With ``p0 = 0`` the energy-optimal control vanishes and the trajectory is
    ballistic.  The target moves linearly in element space from that
    ballistic endpoint to the true one.
    """
    p0 = np.zeros(6)
    e_ball = element_residual(p0, problem, 0.0, np.zeros(6), settings, jacobian=False)
    e_true = target_elements(problem)

    def step(guess, tau):
        tgt = (1.0 - tau) * e_ball + tau * e_true
        return newton_solve(problem, guess, 0.0, settings, "elements", tgt,
                            max_iter=settings.step_iter)

    p, log_ = _march(step, p0, 0.0, 1.0, 0.05, settings, "target homotopy")
    return p, log_


def _parse_schedule(schedule):
    if schedule is None or schedule == "adaptive":
        return None
    if isinstance(schedule, str):
        schedule = [float(s) for s in schedule.split(",") if s.strip()]
    vals = sorted(float(v) for v in schedule)
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise ValueError("lambda schedule values must lie in [0, 1]")
    return vals


def continuation(problem, lambda_schedule="adaptive", settings=SolverSettings(),
                 p0_energy=None):
    """March ``lam`` from 0 (energy) to 1 (L1) and return the bang-bang solution."""
    if p0_energy is None:
        p0_energy, init_log = energy_start(problem, settings)
    else:
        init_log = []
    history = [("init", entry) for entry in init_log]

    def step(guess, lam):
        return newton_solve(problem, guess, lam, settings, "elements",
                            max_iter=settings.step_iter)

    sched = _parse_schedule(lambda_schedule)
    p = np.asarray(p0_energy, dtype=float)
    lam = 0.0
    if sched is None:
        p, log_ = _march(step, p, 0.0, settings.lam_last, settings.lam_step, settings,
                         "lambda continuation")
        history += [("lambda", entry) for entry in log_]
        lam = settings.lam_last
    else:
        for target in [v for v in sched if 0.0 < v < 1.0]:
            p, log_ = _march(step, p, lam, target, target - lam, settings,
                             "lambda continuation")
            history += [("lambda", entry) for entry in log_]
            lam = target
    n_reg = _regularized_switch_count(problem, p, lam, settings)
    sol = newton_solve(problem, p, 1.0, settings, "cartesian")
    sol.history = history + [("bang-bang", h) for h in sol.history]
    n_bb = len(sol.extremal.switches)
    if lam > 0 and n_reg != n_bb:
        msg = (f"switch count changed from {n_reg} (lambda = {lam}) to {n_bb} "
               f"on the bang-bang re-solve")
        log.warning(msg)
        sol.warnings.append(msg)
    return sol


def _regularized_switch_count(problem, p0, lam, settings):
    if lam <= 0:
        return 0
    ext, _ = _propagate(problem, p0, lam, settings.flow, False)
    s = np.linalg.norm(ext.arcs[0].ys[:, 9:12], axis=1) - 1.0
    return int(np.sum(np.sign(s[1:]) != np.sign(s[:-1])))


def hamiltonian_drift(solution, problem):
    """Relative variation of the maximized Hamiltonian along the solution."""
    from .hamiltonians import maximized_hamiltonian

    ts, zs, _ = solution.extremal.samples()
    vals = np.array([maximized_hamiltonian(z, solution.lam, problem.model, problem.eps)
                     for z in zs])
    return float(np.ptp(vals) / max(1.0, np.max(np.abs(vals))))


__all__ = [
    "UnitScales", "TransferProblem", "SolverSettings", "SolverSolution",
    "elements_to_state", "default_config", "problem_from_config",
    "shooting_residual", "element_residual", "orbit_elements", "target_elements",
    "newton_solve", "energy_start", "continuation", "hamiltonian_drift",
]
