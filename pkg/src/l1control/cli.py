"""Command-line front end: ``solve``, ``certify``, ``simulate``, ``singular-scan``.

Exit codes: 0 success, 1 solver failure, 2 bad input, 3 inconclusive
certificate (including violated hypotheses such as an irregular switching).
"""
import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import flow, jacobi, shooting, singular
from .errors import (
    Inconclusive,
    L1ControlError,
    RegularityViolation,
    SingularContact,
)
from .hamiltonians import h1

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2
EXIT_INCONCLUSIVE = 3

STATE_COLUMNS = (
    ["q1", "q2", "q3", "v1", "v2", "v3"]
    + ["pq1", "pq2", "pq3", "pv1", "pv2", "pv3"]
)

log = logging.getLogger("l1control")


class BadInput(Exception):
    pass


# --- config and provenance -----------------------------------------------------

def bundled_config():
    text = resources.files("l1control").joinpath("data/table1.json").read_text()
    return json.loads(text)


def load_config(path):
    if path is None:
        return bundled_config()
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise BadInput(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise BadInput(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise BadInput("config must be a JSON object")
    _check_tolerances(cfg)
    return cfg


def _check_tolerances(cfg):
    for key, val in cfg.get("solver", {}).items():
        if key in ("tol", "rtol", "atol", "element_tol") and not float(val) > 0:
            raise BadInput(f"tolerance {key} must be positive")


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _problem(cfg):
    try:
        return shooting.problem_from_config(cfg)
    except ValueError as exc:
        raise BadInput(str(exc)) from None


def _settings(cfg):
    s = cfg.get("solver", {})
    rtol = float(s.get("rtol", flow.FlowSettings.rtol))
    fs = flow.FlowSettings(rtol=rtol, atol=float(s.get("atol", rtol)))
    return shooting.SolverSettings(tol=float(s.get("tol", 1e-10)), flow=fs)


def _provenance(cfg, problem=None):
    out = {"config_sha256": config_hash(cfg)}
    if problem is not None:
        sc = problem.unit_scales
        out["units"] = {"length_km": sc.length_km, "time_s": sc.time_s,
                        "time_h": sc.time_h, "mu_km3s2": sc.mu_km3s2,
                        "thrust_accel_canonical": problem.eps}
    return out


def _times(t, problem):
    return {"canonical": float(t), "hours": float(problem.unit_scales.to_hours(t))}


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_trajectory_csv(path, ext, provenance, jac=None):
    """Columns ``t, q1..q3, v1..v3, pq1..pq3, pv1..pv3, rho, H1[, delta]``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["t"] + STATE_COLUMNS + ["rho", "H1"] + (["delta"] if jac else [])
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in _flat(provenance)) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for k, arc in enumerate(ext.arcs):
            deltas = jac.deltas(jac.arcs[k]) if jac else None
            for i, t in enumerate(arc.ts):
                z = arc.ys[i, :12]
                row = [repr(float(t))] + [repr(float(c)) for c in z]
                row += [repr(float(arc.rho[i])), repr(float(h1(z)))]
                if jac:
                    row.append(repr(float(deltas[i])))
                w.writerow(row)


def _flat(d, prefix=""):
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            yield from _flat(v, prefix + k + ".")
        else:
            yield prefix + k, v


# --- commands ------------------------------------------------------------------

def _solution_record(sol, problem, cfg):
    ext = sol.extremal
    return {
        "p0": sol.p0,
        "lambda": sol.lam,
        "l1_cost": {"canonical": sol.l1_cost, "hours": sol.l1_cost_hours},
        "burn_fraction": sol.burn_fraction,
        "residual_norm": sol.residual_norm,
        "t_f": _times(problem.t_f, problem),
        "n_switches": len(ext.switches),
        "switch_times": [_times(s.t, problem) for s in ext.switches],
        "switch_h01": [s.h01 for s in ext.switches],
        "warnings": sol.warnings,
        "provenance": _provenance(cfg, problem),
    }


def cmd_solve(args):
    cfg = load_config(args.config)
    problem = _problem(cfg)
    schedule = args.lambda_schedule or cfg.get("solver", {}).get("lambda_schedule", "adaptive")
    try:
        shooting._parse_schedule(schedule)
    except ValueError as exc:
        raise BadInput(str(exc)) from None
    sol = shooting.continuation(problem, schedule, _settings(cfg))
    out = Path(args.out)
    rec = _solution_record(sol, problem, cfg)
    _write_json(out / "solution.json", rec)
    write_trajectory_csv(out / "trajectory.csv", sol.extremal, _provenance(cfg, problem))
    print(f"L1 cost {sol.l1_cost_hours:.4f} h, burn fraction {sol.burn_fraction:.4f}, "
          f"{len(sol.extremal.switches)} switchings, residual {sol.residual_norm:.2e}")
    return EXIT_OK


def _solve_or_load(args, cfg, problem, settings):
    if args.solution:
        try:
            with open(args.solution) as fh:
                p0 = np.asarray(json.load(fh)["p0"], dtype=float)
        except (OSError, KeyError, ValueError) as exc:
            raise BadInput(f"cannot read prior solution: {exc}") from None
        if p0.shape != (6,):
            raise BadInput("prior solution p0 must have 6 components")
        return shooting.newton_solve(problem, p0, 1.0, settings)
    schedule = args.lambda_schedule or cfg.get("solver", {}).get("lambda_schedule", "adaptive")
    return shooting.continuation(problem, schedule, settings)


def certify(problem, sol, extend_factor, settings):
    """Certificate on ``[0, t_f]`` and conjugate scan on the extended span."""
    z0 = np.concatenate([problem.x0.as_array(), sol.p0])
    jac_f = jacobi.propagate_jacobi(z0, (0.0, problem.t_f), problem.eps, problem.model,
                                    settings.flow)
    cert = jacobi.check_A2(jac_f, problem.t_f, settings.flow.h01_threshold)
    jac_x = jacobi.propagate_jacobi(z0, (0.0, extend_factor * problem.t_f), problem.eps,
                                    problem.model, settings.flow)
    cp = jacobi.conjugate_scan(jac_x)
    return cert, jac_x, cp


def cmd_certify(args):
    cfg = load_config(args.config)
    problem = _problem(cfg)
    settings = _settings(cfg)
    scan = cfg.get("scan", {})
    extend = args.extend_factor if args.extend_factor is not None else scan.get("extend_factor", 3.5)
    if not extend >= 1:
        raise BadInput("extend factor must be at least 1")
    sol = _solve_or_load(args, cfg, problem, settings)
    magnitude = args.perturb if args.perturb is not None else float(scan.get("perturb", 0.0))
    if magnitude < 0:
        raise BadInput("perturbation magnitude must be non-negative")
    perturb = {}
    if magnitude:
        seed = args.seed if args.seed is not None else int(scan.get("seed", 0))
        problem = problem.perturbed(magnitude, seed)
        sol = shooting.newton_solve(problem, sol.p0, 1.0, settings)
        perturb = {"magnitude": magnitude, "seed": seed}
    out = Path(args.out)
    verdict = {"provenance": _provenance(cfg, problem), "perturbation": perturb,
               "extend_factor": extend, "p0": sol.p0}
    try:
        cert, jac_x, cp = certify(problem, sol, extend, settings)
    except (Inconclusive, SingularContact, RegularityViolation) as exc:
        verdict.update({"certified": None, "verdict": "inconclusive",
                        "reason": f"{type(exc).__name__}: {exc}"})
        _write_json(out / "verdict.json", verdict)
        print(f"inconclusive: {exc}")
        return EXIT_INCONCLUSIVE
    verdict.update({
        "certified": cert.holds,
        "verdict": "certified" if cert.holds else "not certified",
        "margins": {"delta_min_over_max": cert.margin, "min_abs_h01": cert.min_abs_h01},
        "n_switches_extended": len(jac_x.extremal.switches),
        "t_conj": _times(cp.t, problem) if cp else None,
        "location": cp.location.value if cp else None,
        "arc_kind": cp.kind.value if cp else None,
    })
    _write_json(out / "verdict.json", verdict)
    _write_delta_csv(out / "delta.csv", jac_x, problem, _provenance(cfg, problem))
    tc = f"{problem.unit_scales.to_hours(cp.t):.2f} h ({cp.location.value})" if cp else "none"
    print(f"certified on [0, t_f]: {cert.holds}; first conjugate time on the "
          f"extension: {tc}")
    return EXIT_OK


def _write_delta_csv(path, jac, problem, provenance):
    """``delta(t)`` with both one-sided values at every jump."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in _flat(provenance)) + "\n")
        w = csv.writer(fh)
        w.writerow(["t", "t_hours", "delta", "arc", "rho", "side"])
        for k, arc in enumerate(jac.arcs):
            ds = jac.deltas(arc)
            n = len(arc.ts)
            for i, (t, d) in enumerate(zip(arc.ts, ds)):
                side = "plus" if (i == 0 and k > 0) else ("minus" if i == n - 1 and k < len(jac.arcs) - 1 else "")
                w.writerow([repr(float(t)), repr(float(problem.unit_scales.to_hours(t))),
                            repr(float(d)), k, repr(float(arc.rho[i])), side])


def cmd_simulate(args):
    cfg = load_config(args.config)
    sim = cfg.get("simulate")
    if not isinstance(sim, dict):
        raise BadInput("config needs a 'simulate' section")
    try:
        z0 = np.asarray(sim["z0"], dtype=float)
        t_span = tuple(float(t) for t in sim["t_span"])
        mode = sim.get("mode", "bang-bang")
        eps = float(sim.get("eps", 1.0))
        mu = float(sim.get("mu", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInput(f"bad 'simulate' section: {exc}") from None
    if z0.shape != (12,) or len(t_span) != 2:
        raise BadInput("z0 needs 12 components and t_span two times")
    from .potential import PotentialModel

    model = PotentialModel(mu)
    settings = _settings(cfg).flow
    with_delta = bool(sim.get("delta", False))
    jac = None
    if mode == "bang-bang":
        if with_delta:
            jac = jacobi.propagate_jacobi(z0, t_span, eps, model, settings)
            ext = jac.extremal
        else:
            ext = flow.propagate_bang_bang(z0, t_span, eps, model, settings)
    elif mode == "regularized":
        lam = float(sim.get("lambda", 0.0))
        if with_delta:
            jac = jacobi.propagate_jacobi_regularized(z0, t_span, lam, eps, model, settings)
            ext = jac.extremal
        else:
            ext = flow.propagate_regularized(z0, t_span, lam, eps, model, settings)
    elif mode == "singular":
        if with_delta:
            raise BadInput("delta output is not available for singular arcs")
        ext = flow.propagate_singular(z0, t_span, eps, model, settings)
        drift = max(float(np.max(np.abs(flow.singular_constraints(z, model))))
                    for z in ext.arcs[0].zs)
        print(f"singular constraint drift {drift:.3e}")
    else:
        raise BadInput(f"unknown simulate mode {mode!r}")
    out = Path(args.out)
    write_trajectory_csv(out / "trajectory.csv", ext, _provenance(cfg), jac)
    print(f"{sum(len(a.ts) for a in ext.arcs)} samples, {len(ext.switches)} switchings")
    return EXIT_OK


def cmd_singular_scan(args):
    cfg = load_config(args.config)
    spec = cfg.get("singular_scan", {"seeds": []})
    seeds = spec.get("seeds", []) if isinstance(spec, dict) else None
    if not isinstance(seeds, list):
        raise BadInput("'singular_scan.seeds' must be a list")
    report = []
    for k, seed in enumerate(seeds):
        entry = {"index": k}
        try:
            if "z" in seed:
                z0 = np.asarray(seed["z"], dtype=float)
            else:
                z0 = singular.seed_point(seed["q"], seed["v"], float(seed["alpha"]))
            z, iters = singular.locus_seek(z0)
            c = singular.classify(z)
            v2, v3 = singular.domain_inequalities(z)
            entry.update({
                "ok": True, "z": z, "iterations": iters,
                "abs_pv_minus_1": float(np.linalg.norm(z[9:12]) - 1.0),
                "residual": c.residual, "angle": c.angle,
                "angle_in_window": singular.angle_in_window(c.angle),
                "legendre_ok": c.legendre_ok, "domain_ok": c.domain_ok,
                "V2": v2, "V3": v3, "h10001": c.h10001, "rho_s_unit_eps": c.rho_s,
            })
        except (L1ControlError, ValueError, KeyError, TypeError) as exc:
            entry.update({"ok": False, "error": f"{type(exc).__name__}: {exc}"})
        report.append(entry)
    out = Path(args.out)
    _write_json(out / "singular_scan.json", {
        "alpha0": singular.ALPHA0,
        "window": [math.pi / 2, math.pi - singular.ALPHA0],
        "points": report,
        "provenance": _provenance(cfg),
    })
    print(f"{sum(e['ok'] for e in report)} of {len(report)} seeds reached the locus")
    return EXIT_OK


# --- entry point -------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="l1control", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration (default: bundled Table 1 fixture)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="random seed")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("solve", help="continuation from energy to L1 optimum")
    common(sp)
    sp.add_argument("--lambda-schedule", default=None,
                    help="'adaptive' or comma-separated lambda values")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("certify", help="no-fold certificate and conjugate-point scan")
    common(sp)
    sp.add_argument("--lambda-schedule", default=None)
    sp.add_argument("--solution", help="solution.json from a previous solve")
    sp.add_argument("--extend-factor", type=float, default=None,
                    help="scan horizon as a multiple of t_f (default 3.5)")
    sp.add_argument("--perturb", type=float, default=None,
                    help="endpoint perturbation magnitude in canonical units (default: config, 0)")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("simulate", help="propagate an extremal from a given point")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("singular-scan", help="project seeds onto the singular locus")
    common(sp)
    sp.set_defaults(func=cmd_singular_scan)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BadInput, ValueError) as exc:
        _report_error(args, "bad_input", exc)
        return EXIT_INPUT
    except Inconclusive as exc:
        _report_error(args, "inconclusive", exc)
        return EXIT_INCONCLUSIVE
    except L1ControlError as exc:
        _report_error(args, "solver_failure", exc)
        return EXIT_SOLVER


def _report_error(args, kind, exc):
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    try:
        _write_json(Path(args.out) / "error.json", rec)
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
