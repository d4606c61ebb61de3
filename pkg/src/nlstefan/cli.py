"""Command line front end.

Subcommands: solve, analyze-modulus, continuation, lemma-check, verify,
tail.  Contract failures exit with status 2 and print a machine-readable
error object to stderr; failed verification checks exit with status 1.
Scalar output on stdout uses 17 significant digits.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys

import numpy as np

from . import analysis, continuation as continuation_mod, fileio
from .config import RunConfig, emit_run_config, parse_run_config, realize
from .errors import NlstefanError, SchemaViolationError
from .lattice import tail as tail_fn
from .solver import (SolverConfig, caccioppoli_audit, max_principle_check,
                     normalize, solve)

F = "%.17g"


def _echo(cfg: RunConfig) -> dict:
    return json.loads(emit_run_config(cfg))


def _load_config(args) -> RunConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = parse_run_config(fh.read())
    else:
        cfg = RunConfig()
    if args.preset:
        cfg.problem = args.preset
    return cfg


def _require_out(args) -> str:
    if not args.out:
        raise SchemaViolationError(["out: this subcommand needs --out DIR"])
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _anchor(cfg: RunConfig, preset, problem):
    if cfg.analysis.anchor is not None:
        vals = cfg.analysis.anchor
        return tuple(vals[:-1]), vals[-1]
    if preset is not None:
        return tuple(preset.anchor[0]), float(preset.anchor[1])
    dim = problem.grid.dimension
    center = tuple(problem.grid.origin[d]
                   + 0.5 * (problem.grid.shape[d] - 1) * problem.grid.spacing
                   for d in range(dim))
    return center, problem.horizon


def _rho0(cfg: RunConfig, preset) -> float:
    if cfg.analysis.rho0 is not None:
        return cfg.analysis.rho0
    if preset is not None:
        return preset.rho0
    return 0.25


def _ladder_spec(cfg: RunConfig, preset):
    levels = cfg.analysis.levels
    shrink = cfg.analysis.shrink
    if levels is None:
        levels = preset.ladder_levels if preset is not None else 8
    if shrink is None:
        shrink = preset.ladder_shrink if preset is not None else 0.65
    return levels, shrink


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    preset, problem, solver_cfg = realize(cfg)
    traj = solve(problem, solver_cfg)
    fileio.write_trajectory(out, traj, config_echo=_echo(cfg))
    worst = max(d.residual_norm for d in traj.diagnostics)
    print(f"solve: {len(traj.diagnostics)} steps, worst residual {F % worst}")
    return 0


def cmd_tail(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    preset, problem, solver_cfg = realize(cfg)
    traj = solve(problem, solver_cfg)
    x0, t0 = _anchor(cfg, preset, problem)
    center = list(cfg.tail.center[:-1]) if cfg.tail.center else list(x0)
    t_at = cfg.tail.center[-1] if cfg.tail.center else t0
    rho = cfg.tail.rho if cfg.tail.rho is not None else _rho0(cfg, preset)
    window = tuple(cfg.tail.window) if cfg.tail.window else (0.0, problem.horizon)
    value = tail_fn(traj.samples(), center, rho, window, problem.s, problem.p)
    payload = {"center": center + [t_at], "rho": rho, "window": list(window),
               "tail": value}
    fileio.write_json(os.path.join(out, "tail.json"), payload)
    print(f"tail: {F % value}")
    return 0


def cmd_analyze_modulus(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    preset, problem, solver_cfg = realize(cfg)
    traj = solve(problem, solver_cfg)
    x0, t0 = _anchor(cfg, preset, problem)
    rho0 = _rho0(cfg, preset)
    n_levels, shrink = _ladder_spec(cfg, preset)
    levels, omega0 = analysis.modulus_ladder(
        traj, (x0, t0), rho0, n_levels=n_levels, shrink=shrink)
    report = analysis.fit_log_modulus(levels, problem.eps, rho0)
    params = analysis.IterationParams(
        s=problem.s, p=problem.p, eps=problem.eps, omega0=omega0, rho0=rho0)
    seq = analysis.interior_sequences(params, n_levels=n_levels)
    tail_rows = analysis.sequence_tail_report(traj, seq, (x0, t0))
    fileio.write_sequence_csv(
        os.path.join(out, "sequences.csv"),
        [{"level": r.index, "rho": r.rho, "omega": r.omega, "theta": r.theta,
          "osc": r.osc, "tail_ratio": r.ratio} for r in tail_rows])
    with open(os.path.join(out, "modulus.csv"), "w", encoding="utf-8") as fh:
        fh.write("level,radius,osc\n")
        for i, (r, o) in enumerate(levels):
            fh.write(f"{i},{F % r},{F % o}\n")
    fileio.write_json(os.path.join(out, "modulus.json"), {
        "anchor": list(x0) + [t0], "rho0": rho0, "omega0": omega0,
        "c": report.c, "varsigma": report.varsigma, "eps": report.eps,
        "residual": report.residual, "n_samples": report.n_samples,
        "config": _echo(cfg)})
    print(f"modulus fit: c={F % report.c} varsigma={F % report.varsigma} "
          f"residual={F % report.residual}")
    return 0


def cmd_continuation(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    preset, problem, solver_cfg = realize(cfg)
    eps_values = cfg.continuation.eps_values
    if preset is not None and cfg.continuation.eps_values == [0.2, 0.1, 0.05, 0.025]:
        eps_values = list(preset.eps_schedule)
    family = continuation_mod.run_family(problem, eps_values, solver_cfg,
                                         threads=args.threads)
    for entry in family.entries:
        if entry.ok:
            fileio.write_trajectory(os.path.join(out, f"eps_{entry.eps:g}"),
                                    entry.trajectory)
    pair = continuation_mod.limit_pair(family, cfg.continuation.delta_resolve)
    report = continuation_mod.convergence_report(family)
    grid = family.entries[-1].trajectory.problem.grid
    fileio.write_field_csv(os.path.join(out, "limit_u.csv"), grid, pair.u_states[-1])
    fileio.write_field_csv(os.path.join(out, "limit_w.csv"), grid, pair.w_states[-1])
    fileio.write_field_csv(os.path.join(out, "limit_v.csv"), grid, pair.v_states[-1])
    fileio.write_json(os.path.join(out, "family.json"), {
        "eps_values": family.eps_values,
        "distances": [[None if not np.isfinite(d) else d for d in row]
                      for row in family.distances.tolist()],
        "successive_distances": report.successive_distances,
        "monotone": report.monotone,
        "band_fractions": [None if not np.isfinite(f) else f
                           for f in family.band_fractions],
        "limit_band_fraction": pair.band_fraction,
        "errors": {f"{e.eps:g}": e.error for e in family.entries if not e.ok},
        "config": _echo(cfg)})
    print(f"continuation: distances {[F % d for d in report.successive_distances]} "
          f"bands {[F % f for f in family.band_fractions]}")
    return 0


def cmd_lemma_check(args) -> int:
    out = _require_out(args)
    grid_vals = (4.0, 8.0, 16.0)
    rows = []
    all_pass = True
    for m2, n2, l2 in itertools.product(grid_vals, repeat=3):
        if l2 < m2:
            continue
        for omega0 in (1.0, 2.0, 10.0):
            verdict = analysis.lemma_iter_verify(m2, n2, l2, omega0)
            rows.append({"m2": m2, "n2": n2, "l2": l2, "omega0": omega0,
                         "epsilon": verdict.epsilon, "passed": verdict.passed,
                         "min_margin": verdict.min_margin})
            all_pass &= verdict.passed
    with open(os.path.join(out, "lemma_iter.csv"), "w", encoding="utf-8") as fh:
        fh.write("m2,n2,l2,omega0,epsilon,min_margin,passed\n")
        for r in rows:
            fh.write(f"{r['m2']:g},{r['n2']:g},{r['l2']:g},{r['omega0']:g},"
                     f"{F % r['epsilon']},{F % r['min_margin']},{int(r['passed'])}\n")

    rng = np.random.default_rng(args.seed)
    geo_rows = []
    for _ in range(20):
        c = float(rng.uniform(1.0, 5.0))
        b = float(rng.uniform(1.0, 4.0))
        alpha = float(rng.uniform(0.2, 2.0))
        a0 = c ** (-1.0 / alpha) * b ** (-1.0 / alpha ** 2)
        rep = analysis.geometric_convergence(c, b, alpha, a0)
        ok = bool(rep.within_certificate) if rep.within_certificate is not None else rep.bounded
        geo_rows.append({"c": c, "b": b, "alpha": alpha, "a0": a0, "passed": ok})
        all_pass &= ok
    negative = analysis.geometric_convergence(1.0, 2.0, 1.0, 0.75)
    all_pass &= negative.diverged
    with open(os.path.join(out, "lemma_tech.csv"), "w", encoding="utf-8") as fh:
        fh.write("c,b,alpha,a0,passed\n")
        for r in geo_rows:
            fh.write(f"{F % r['c']},{F % r['b']},{F % r['alpha']},"
                     f"{F % r['a0']},{int(r['passed'])}\n")
    fileio.write_json(os.path.join(out, "verdicts.json"), {
        "iteration_lemma": {"cases": len(rows), "all_passed": all_pass},
        "decay_lemma": {"cases": len(geo_rows),
                        "negative_control_diverged": bool(negative.diverged)},
    })
    print(f"lemma-check: {len(rows)} iteration cases, "
          f"{len(geo_rows)} decay cases, all_passed={all_pass}")
    return 0 if all_pass else 1


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args)
    preset, problem, solver_cfg = realize(cfg)
    traj = solve(problem, solver_cfg)
    checks = {}

    mp = max_principle_check(traj)
    checks["max_principle"] = {"bound": mp.bound, "defect": mp.defect,
                               "passed": mp.passed}

    # comparison: raise the initial data inside the unknown set and check
    # the order is preserved at every stored level
    x = problem.grid.coordinates()
    bump = np.zeros(problem.grid.n_nodes)
    center = x[problem.unknown_mask].mean(axis=0)
    r2 = np.sum((x - center[None, :]) ** 2, axis=1)
    bump[problem.unknown_mask] = 0.25 * np.exp(-8.0 * r2[problem.unknown_mask])
    import dataclasses as _dc
    upper_problem = _dc.replace(problem, initial=problem.initial + bump)
    upper = solve(upper_problem, solver_cfg)
    margin = min(float(np.min(b - a)) for a, b in zip(traj.states, upper.states))
    checks["comparison"] = {"min_margin": margin, "passed": margin >= -1e-9}

    scaled = normalize(problem, 2.0)
    straj = solve(scaled, solver_cfg)
    defect = max(float(np.max(np.abs(2.0 * b - a)))
                 for a, b in zip(traj.states, straj.states))
    checks["normalization"] = {"defect": defect, "passed": defect <= 1e-9}

    x0, t0 = _anchor(cfg, preset, problem)
    rho0 = _rho0(cfg, preset)
    theta = analysis.intrinsic_theta(1.0, problem.p)
    cyl = analysis.Cylinder(x0, t0, rho0, theta)
    audit = caccioppoli_audit(traj, level=problem.eps, sign="+", cylinder=cyl)
    checks["caccioppoli"] = {"ratio": audit.ratio, "lhs": audit.lhs,
                             "rhs": audit.rhs,
                             "passed": bool(np.isfinite(audit.ratio))}

    bpoint = preset.boundary_point[0] if (preset and preset.boundary_point) else \
        (problem.grid.origin[0],)
    h = problem.grid.spacing
    radii = [8 * h, 16 * h, 32 * h]
    density = analysis.measure_density(problem.grid, problem.unknown_mask,
                                       bpoint, radii, alpha0=0.25)
    checks["measure_density"] = {"radii": radii, "fractions": density.fractions,
                                 "min_fraction": density.min_fraction,
                                 "passed": density.passed}

    passed = all(c["passed"] for c in checks.values())
    fileio.write_json(os.path.join(out, "verify.json"),
                      {"checks": checks, "passed": passed, "config": _echo(cfg)})
    for name, c in checks.items():
        print(f"verify {name}: {'PASS' if c['passed'] else 'FAIL'}")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlstefan",
                                     description="nonlocal two-phase lattice laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("solve", cmd_solve), ("analyze-modulus", cmd_analyze_modulus),
                     ("continuation", cmd_continuation), ("lemma-check", cmd_lemma_check),
                     ("verify", cmd_verify), ("tail", cmd_tail)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None, help="run config JSON")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--preset", type=str, default=None, help="preset name")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for family solves")
        sp.add_argument("--seed", type=int, default=0, help="sampling seed")
        sp.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except SchemaViolationError as exc:
        json.dump({"error": {"type": "SchemaViolationError",
                             "violations": exc.violations}}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except NlstefanError as exc:
        json.dump({"error": {"type": type(exc).__name__, "message": str(exc)}},
                  sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
