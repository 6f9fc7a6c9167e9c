"""Scenario-driven command line front end.

One YAML config schema serves every subcommand; unknown keys anywhere are
errors so typos cannot silently change tolerances.  Outputs are CSV field
tables (columns ``time, vertex, value`` with time descending from 0) plus
a JSON summary of the diagnostics.  Identical config and seed produce
byte-identical summaries: summation orders and tie-breaks are fixed and
nothing time- or host-dependent is written.

Exit codes: 0 success, 2 config/validation error, 3 solver failure.

Subcommands
-----------
solve-inviscid   backward Bellman value table
solve-viscous    transformed solve; --method picard|mol|gradient-flow|direct-hj
solve-fp         forward density evolution (drift: zero | form | optimal)
duality          both sides of the stochastic value identity
convergence      refinement sweeps (study: cole-hopf | inviscid-value | duality-dt)
check-form       closedness, periods, harmonicity, path-bound constant
check-hypotheses regularity constants and admissible step sizes
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .space import GraphSpace, TimeGrid
from .forms import (
    ChartForm,
    Cocycle,
    check_hypotheses,
    is_harmonic,
    path_bound_constant,
    periods,
)
from .cover import build_cover, WindowExceeded
from .inviscid import InviscidProblem, cover_equivalence_check, solve_value
from .viscous import (
    NoContraction,
    NonPositive,
    StepSizeRejected,
    ViscousProblem,
    bound_envelopes,
    cole_hopf,
    gradient_flow_solve,
    mol_solve,
    picard_solve,
    solve_viscous_hj_direct,
)
from .fokker_planck import (
    DriftPath,
    MassDrift,
    duality_check,
    fp_solve,
    optimal_drift,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


# -- schema -----------------------------------------------------------------

_SCHEMA = {
    "seed": None,
    "space": {"type", "n", "length", "vertices", "edges", "measure"},
    "form": {"type", "c", "values", "faces", "charts", "harmonic_projection"},
    "potential": {"type", "values", "amplitude", "mode"},
    "final_condition": {"type", "values", "amplitude", "mode"},
    "initial_measure": {"type", "values"},
    "beta": None,
    "grid": {"t_start", "steps"},
    "cover": {"h_max", "auto_double_limit"},
    "solver": {
        "method", "scheme", "theta", "picard_window", "tolerance",
        "max_iterations", "tau", "homological_term", "seam_weight",
        "drift",
    },
    "convergence": {"study", "sizes", "dt_values"},
    "output_dir": None,
}


def _check_keys(cfg):
    unknown = set(cfg) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for key, allowed in _SCHEMA.items():
        if allowed is None or key not in cfg:
            continue
        section = cfg[key]
        if not isinstance(section, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        extra = set(section) - allowed
        if extra:
            raise ConfigError(f"unknown keys in {key!r}: {sorted(extra)}")


def load_config(path):
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(cfg)
    return cfg


# -- builders ----------------------------------------------------------------


def build_space(cfg):
    spec = cfg.get("space")
    if not spec:
        raise ConfigError("missing 'space' section")
    kind = spec.get("type")
    if kind == "cycle":
        return GraphSpace.cycle(int(spec["n"]), float(spec.get("length", 1.0)))
    if kind == "path":
        return GraphSpace.path_graph(int(spec["n"]), float(spec.get("length", 1.0)))
    if kind == "explicit":
        edges = [tuple(e) for e in spec["edges"]]
        pairs = [(int(a), int(b)) for a, b, *_ in edges]
        lengths = [float(e[2]) for e in edges]
        weights = [float(e[3]) for e in edges]
        n = int(spec["vertices"])
        meas = spec.get("measure", "uniform")
        if meas == "uniform":
            measure = np.full(n, 1.0 / n)
        else:
            measure = np.asarray(meas, dtype=float)
        try:
            return GraphSpace(n, pairs, lengths, weights, measure)
        except ValueError as exc:
            raise ConfigError(f"invalid explicit space: {exc}") from exc
    raise ConfigError(f"unknown space type {kind!r}")


def build_form(cfg, space):
    spec = cfg.get("form") or {"type": "zero"}
    kind = spec.get("type", "zero")
    if kind == "zero":
        form = Cocycle(space, np.zeros(space.n_edges))
    elif kind == "constant":
        form = Cocycle.constant_on_cycle(space, float(spec["c"]))
    elif kind == "edges":
        values = np.zeros(space.n_edges)
        for a, b, val in spec["values"]:
            idx, sign = space.edge_id(int(a), int(b))
            values[idx] = sign * float(val)
        faces = tuple(tuple(f) for f in spec.get("faces", []))
        try:
            form = Cocycle(space, values, faces=faces)
        except ValueError as exc:
            raise ConfigError(f"invalid cocycle: {exc}") from exc
    elif kind == "charts":
        charts = [(tuple(ch["vertices"]), ch["values"]) for ch in spec["charts"]]
        try:
            form = ChartForm(space, charts).to_cocycle()
        except ValueError as exc:
            raise ConfigError(f"invalid chart form: {exc}") from exc
    else:
        raise ConfigError(f"unknown form type {kind!r}")
    if spec.get("harmonic_projection"):
        from .forms import harmonic_representative

        form = harmonic_representative(form)
    return form


def _profile_field(spec, space, what):
    kind = spec.get("type", "zero")
    if kind == "zero":
        return np.zeros(space.n_vertices)
    if kind == "values":
        vals = np.asarray(spec["values"], dtype=float)
        if len(vals) != space.n_vertices:
            raise ConfigError(f"{what}: expected {space.n_vertices} values")
        return vals
    if kind == "cosine":
        amp = float(spec.get("amplitude", 1.0))
        mode = int(spec.get("mode", 1))
        x = np.arange(space.n_vertices) / space.n_vertices
        return amp * np.cos(2.0 * np.pi * mode * x)
    raise ConfigError(f"unknown {what} type {kind!r}")


def build_potential(cfg, space):
    spec = cfg.get("potential") or {"type": "zero"}
    field = _profile_field(spec, space, "potential")
    return None if not np.any(field) else field


def build_final_condition(cfg, space):
    spec = cfg.get("final_condition") or {"type": "zero"}
    return _profile_field(spec, space, "final_condition")


def build_grid(cfg):
    spec = cfg.get("grid")
    if not spec:
        raise ConfigError("missing 'grid' section")
    try:
        return TimeGrid(float(spec["t_start"]), int(spec["steps"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def build_initial_measure(cfg, space):
    spec = cfg.get("initial_measure") or {"type": "uniform"}
    kind = spec.get("type", "uniform")
    if kind == "uniform":
        return np.ones(space.n_vertices)
    if kind == "values":
        nu = np.asarray(spec["values"], dtype=float)
        if np.any(nu <= 0):
            raise ConfigError("initial measure must have positive density")
        return nu / float(nu @ space.measure)
    raise ConfigError(f"unknown initial_measure type {kind!r}")


# -- output helpers -----------------------------------------------------------


def _write_field_csv(path, grid, values):
    """CSV rows (time, vertex, value) with time descending from 0."""
    nodes = grid.nodes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "vertex", "value"])
        for k in range(grid.steps, -1, -1):
            for x in range(values.shape[1]):
                writer.writerow([repr(float(nodes[k])), x, repr(float(values[k, x]))])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_summary(outdir, name, payload):
    path = Path(outdir) / f"{name}.json"
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _prepare_outdir(cfg, override):
    outdir = Path(override or cfg.get("output_dir", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


# -- subcommands ----------------------------------------------------------------


def _cmd_check_form(cfg, outdir):
    space = build_space(cfg)
    form = build_form(cfg, space)
    rep = is_harmonic(form)
    payload = {
        "periods": [float(p) for p in periods(form)],
        "harmonic": bool(rep.harmonic),
        "divergence_max": rep.max_abs,
        "path_bound_constant": path_bound_constant(form),
        "n_edges": space.n_edges,
        "edge_values": form.to_edge_list(),
    }
    _write_summary(outdir, "check_form", payload)
    return payload


def _cmd_check_hypotheses(cfg, outdir):
    space = build_space(cfg)
    form = build_form(cfg, space)
    grid = build_grid(cfg)
    beta = float(cfg.get("beta", 1.0))
    seed = int(cfg.get("seed", 0))
    rep = check_hypotheses(
        space, form, build_potential(cfg, space), grid, beta, seed=seed
    )
    payload = rep.as_dict()
    _write_summary(outdir, "check_hypotheses", payload)
    return payload


def _cmd_solve_inviscid(cfg, outdir):
    space = build_space(cfg)
    problem = InviscidProblem(
        space,
        build_form(cfg, space),
        build_potential(cfg, space),
        build_final_condition(cfg, space),
        build_grid(cfg),
    )
    table = solve_value(problem)
    _write_field_csv(Path(outdir) / "value.csv", problem.grid, table.u)
    payload = {
        "value_at_start_min": float(np.min(table.u[0])),
        "value_at_start_max": float(np.max(table.u[0])),
        "steps": problem.grid.steps,
    }
    _write_summary(outdir, "solve_inviscid", payload)
    return payload


def _viscous_problem(cfg):
    space = build_space(cfg)
    return ViscousProblem(
        space,
        build_form(cfg, space),
        build_potential(cfg, space),
        float(cfg.get("beta", 1.0)),
        build_grid(cfg),
        final_u=build_final_condition(cfg, space),
    )


def _cmd_solve_viscous(cfg, outdir, method):
    solver_cfg = cfg.get("solver", {})
    problem = _viscous_problem(cfg)
    if method == "picard":
        sol = picard_solve(
            problem,
            window=float(solver_cfg.get("picard_window", 0.5)),
            tol=float(solver_cfg.get("tolerance", 1e-10)),
            max_iter=int(solver_cfg.get("max_iterations", 200)),
        )
    elif method == "mol":
        sol = mol_solve(problem, scheme=solver_cfg.get("scheme", "crank_nicolson"))
    elif method == "gradient-flow":
        h_max = int(cfg.get("cover", {}).get("h_max", 4))
        cov = build_cover(problem.space, problem.omega, h_max, problem.beta)
        sol = gradient_flow_solve(
            problem,
            cov,
            tau=solver_cfg.get("tau"),
            homological_term=solver_cfg.get("homological_term", "quadratic"),
            seam_weight=solver_cfg.get("seam_weight", "midpoint"),
        )
        sol.diagnostics["cover"] = cov.summary()
    elif method == "direct-hj":
        u_path = solve_viscous_hj_direct(problem)
        _write_field_csv(Path(outdir) / "u.csv", u_path.grid, u_path.values)
        payload = {
            "method": "direct-hj",
            "u_at_start_min": float(np.min(u_path.values[0])),
            "u_at_start_max": float(np.max(u_path.values[0])),
        }
        _write_summary(outdir, "solve_viscous", payload)
        return payload
    else:
        raise ConfigError(f"unknown viscous method {method!r}")
    u_path = cole_hopf(sol)
    _write_field_csv(Path(outdir) / "v.csv", sol.grid, sol.values)
    _write_field_csv(Path(outdir) / "u.csv", sol.grid, u_path.values)
    diagnostics = {
        k: v for k, v in sol.diagnostics.items() if k != "forward_iterates"
    }
    env = bound_envelopes(problem.space, sol)
    payload = {
        "method": sol.method,
        "u_at_start_min": float(np.min(u_path.values[0])),
        "u_at_start_max": float(np.max(u_path.values[0])),
        "v_min": float(np.min(sol.values)),
        "envelopes": {
            "value_bound": float(env.value_bound[0]),
            "slope_bound": float(env.slope_bound[0]),
            "positivity_bound": float(env.positivity_bound[0]),
        },
        "diagnostics": diagnostics,
    }
    _write_summary(outdir, "solve_viscous", payload)
    return payload


def _cmd_solve_fp(cfg, outdir):
    space = build_space(cfg)
    grid = build_grid(cfg)
    beta = float(cfg.get("beta", 1.0))
    theta = float(cfg.get("solver", {}).get("theta", 0.5))
    drift_kind = cfg.get("solver", {}).get("drift", "form")
    nu = build_initial_measure(cfg, space)
    form = build_form(cfg, space)
    if drift_kind == "zero":
        drift = DriftPath.zero(space, grid)
    elif drift_kind == "form":
        drift = DriftPath.constant(space, grid, form)
    elif drift_kind == "optimal":
        problem = _viscous_problem(cfg)
        sol = mol_solve(problem)
        drift = optimal_drift(problem, cole_hopf(sol))
    else:
        raise ConfigError(f"unknown drift kind {drift_kind!r}")
    rho = fp_solve(space, nu, drift, grid, beta, theta=theta)
    _write_field_csv(Path(outdir) / "density.csv", grid, rho.values)
    mass = rho.values @ space.measure
    payload = {
        "drift": drift_kind,
        "theta": theta,
        "mass_error": float(np.max(np.abs(mass - 1.0))),
        "min_density": rho.min_density(),
    }
    _write_summary(outdir, "solve_fp", payload)
    return payload


def _cmd_duality(cfg, outdir):
    problem = _viscous_problem(cfg)
    nu = build_initial_measure(cfg, problem.space)
    solver_cfg = cfg.get("solver", {})
    rep = duality_check(
        problem,
        nu,
        method=solver_cfg.get("method", "mol"),
        theta=float(solver_cfg.get("theta", 0.5)),
    )
    payload = rep.as_dict()
    payload["dt"] = problem.grid.dt
    payload["n_vertices"] = problem.space.n_vertices
    _write_summary(outdir, "duality", payload)
    return payload


def _fit_order(sizes, errors):
    xs = np.log(np.asarray(sizes, dtype=float))
    ys = np.log(np.maximum(np.asarray(errors, dtype=float), 1e-300))
    slope = np.polyfit(xs, ys, 1)[0]
    return float(-slope)


def _cmd_convergence(cfg, outdir):
    spec = cfg.get("convergence") or {}
    study = spec.get("study", "cole-hopf")
    if study == "cole-hopf":
        sizes = [int(s) for s in spec.get("sizes", [32, 64, 128])]
        rows, errors = [], []
        for n in sizes:
            sub = dict(cfg)
            sub["space"] = {"type": "cycle", "n": n,
                            "length": cfg.get("space", {}).get("length", 1.0)}
            problem = _viscous_problem(sub)
            direct = solve_viscous_hj_direct(problem)
            transformed = cole_hopf(mol_solve(problem))
            err = float(np.max(np.abs(direct.values - transformed.values)))
            rows.append({"n": n, "error": err})
            errors.append(err)
        payload = {
            "study": study,
            "table": rows,
            "fitted_order": _fit_order(sizes, errors),
            "monotone_decreasing": bool(all(
                e2 < e1 for e1, e2 in zip(errors, errors[1:])
            )),
        }
    elif study == "inviscid-value":
        sizes = [int(s) for s in spec.get("sizes", [64, 128, 256])]
        c = float(cfg.get("form", {}).get("c", 2.0))
        exact = -0.5 * c * c * (-float(cfg["grid"]["t_start"]))
        rows, errors = [], []
        for n in sizes:
            sub = dict(cfg)
            sub["space"] = {"type": "cycle", "n": n,
                            "length": cfg.get("space", {}).get("length", 1.0)}
            sub["grid"] = {"t_start": cfg["grid"]["t_start"], "steps": 2 * n}
            space = build_space(sub)
            problem = InviscidProblem(
                space, build_form(sub, space), build_potential(sub, space),
                build_final_condition(sub, space), build_grid(sub),
            )
            val = float(solve_value(problem).u[0][0])
            err = abs(val - exact)
            rows.append({"n": n, "value": val, "error": err})
            errors.append(err)
        payload = {"study": study, "exact": exact, "table": rows,
                   "monotone_nonincreasing": bool(all(
                       e2 <= e1 + 1e-12 for e1, e2 in zip(errors, errors[1:])
                   ))}
    elif study == "duality-dt":
        dts = [float(d) for d in spec.get("dt_values", [1e-2, 1e-3])]
        t_start = float(cfg["grid"]["t_start"])
        rows, errors = [], []
        for dt in dts:
            sub = dict(cfg)
            sub["grid"] = {"t_start": t_start, "steps": round(-t_start / dt)}
            problem = _viscous_problem(sub)
            nu = build_initial_measure(sub, problem.space)
            rep = duality_check(problem, nu)
            rows.append({"dt": dt, "gap": abs(rep.gap)})
            errors.append(abs(rep.gap))
        payload = {"study": study, "table": rows,
                   "monotone_decreasing": bool(all(
                       e2 < e1 for e1, e2 in zip(errors, errors[1:])
                   ))}
    elif study == "cover-identity":
        # window driver: double h_max on overflow, up to the configured cap
        space = build_space(cfg)
        problem = InviscidProblem(
            space, build_form(cfg, space), build_potential(cfg, space),
            build_final_condition(cfg, space), build_grid(cfg),
        )
        cover_cfg = cfg.get("cover", {})
        h_max = int(cover_cfg.get("h_max", 1))
        limit = int(cover_cfg.get("auto_double_limit", 64))
        attempts = []
        while True:
            cov = build_cover(space, problem.omega, h_max)
            try:
                disc, _ = cover_equivalence_check(problem, cov)
            except WindowExceeded:
                attempts.append({"h_max": h_max, "status": "window exceeded"})
                if 2 * h_max > limit:
                    raise
                h_max *= 2
                continue
            attempts.append({"h_max": h_max, "status": "ok",
                             "discrepancy": disc})
            break
        payload = {"study": study, "attempts": attempts,
                   "cover": cov.summary(), "discrepancy": disc}
    else:
        raise ConfigError(f"unknown convergence study {study!r}")
    _write_summary(outdir, "convergence", payload)
    return payload


# -- entry point -----------------------------------------------------------------


def make_parser():
    parser = argparse.ArgumentParser(
        prog="hjhom",
        description="Hamilton-Jacobi with a winding drift on weighted graphs",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("config", help="YAML scenario config")
        p.add_argument("--output", help="output directory override")
        return p

    add("check-form", help="closedness / periods / harmonicity report")
    add("check-hypotheses", help="regularity constants and step bounds")
    add("solve-inviscid", help="backward Bellman value function")
    p = add("solve-viscous", help="transformed linear solve")
    p.add_argument(
        "--method",
        choices=["picard", "mol", "gradient-flow", "direct-hj"],
        default="mol",
    )
    add("solve-fp", help="forward density evolution")
    add("duality", help="stochastic value identity check")
    add("convergence", help="refinement sweep")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        outdir = _prepare_outdir(cfg, args.output)
        if args.command == "check-form":
            payload = _cmd_check_form(cfg, outdir)
        elif args.command == "check-hypotheses":
            payload = _cmd_check_hypotheses(cfg, outdir)
        elif args.command == "solve-inviscid":
            payload = _cmd_solve_inviscid(cfg, outdir)
        elif args.command == "solve-viscous":
            payload = _cmd_solve_viscous(cfg, outdir, args.method)
        elif args.command == "solve-fp":
            payload = _cmd_solve_fp(cfg, outdir)
        elif args.command == "duality":
            payload = _cmd_duality(cfg, outdir)
        elif args.command == "convergence":
            payload = _cmd_convergence(cfg, outdir)
        else:  # pragma: no cover - argparse enforces choices
            raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoContraction, StepSizeRejected, MassDrift, NonPositive,
            WindowExceeded) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    json.dump(_jsonable(payload), sys.stdout, sort_keys=True)
    print()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
