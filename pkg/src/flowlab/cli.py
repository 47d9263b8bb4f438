"""flowlab command line: batch experiment driver.

    flowlab run <config> [--seed N] [--threads N] [--out-dir D]
                         [--dt-override DT] [--paths-override N]
    flowlab list-presets
    flowlab plot <report.json> [--out-dir D]

A config file (JSON or YAML) declares one experiment:

    kind: audit | simulate | lyapunov | flow | occupation | zvonkin | markov
    problem: "<preset id>" or {d, m, drift: [...], diffusion: [[...]]}
    simulation: {scheme, dt, horizon, n_paths, seed, r_cap}
    params: kind-specific parameters
    output_dir: where report.json, CSV tables and SVG figures go

Exit codes: 0 all checks pass, 1 any failed, 2 inconclusive present,
3 configuration or runtime error. report.json is byte-identical across
reruns and worker counts; timestamps live in provenance.json.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import plotting, reporting
from ._parallel import resolve_threads
from .coefficients import (AuditUnavailableError, PresetNotFoundError,
                           SdeProblem, audit_coercivity, audit_ellipticity,
                           audit_growth, audit_monotonicity,
                           default_audit_grid, from_expressions, list_presets,
                           preset)
from .expressions import ExpressionError, parse_expression
from .integrators import (ConfigError, SimulationConfig, coupled_simulate,
                          ensemble_to_csv, first_exit, simulate, write_flw1)
from .lyapunov import (LyapunovSpec, exp_moment_check, poly_moment_check,
                       steering_contraction_check, supermartingale_test)
from .flow_regularity import fd_gradient, witness_fit
from .markov_stats import (BoundedFunction, feller_refinement_check,
                           girsanov_hitting, hitting_probability,
                           semigroup_map)
from .occupation import (exp_occupation_check, khasminskii_check,
                         krylov_ratio, local_exp_occupation_check,
                         occupation_integral)
from .zvonkin import (PdeGridSpec, conjugacy_check, build_transform,
                      solve_with_smallness, split_drift, write_zvk1)


class CliConfigError(ValueError):
    """Configuration problem; maps to exit code 3 with field diagnostics."""


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliConfigError(f"cannot read config {path}: {exc}") from exc
    if path.endswith((".yaml", ".yml")):
        import yaml
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise CliConfigError(f"YAML error in {path}: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliConfigError(
                f"JSON error in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    if not isinstance(data, dict):
        raise CliConfigError(f"config {path} must be a mapping")
    return data


_MISSING = object()


def _field(cfg: dict, name: str, default=_MISSING):
    if name in cfg:
        return cfg[name]
    if default is _MISSING:
        raise CliConfigError(f"missing required config field {name!r}")
    return default


def _resolve_problem(spec) -> SdeProblem:
    if isinstance(spec, str):
        try:
            return preset(spec)
        except PresetNotFoundError as exc:
            raise CliConfigError(f"problem: {exc}") from exc
    if isinstance(spec, dict):
        try:
            return from_expressions(spec)
        except (ExpressionError, KeyError, ValueError) as exc:
            raise CliConfigError(f"problem expressions: {exc}") from exc
    raise CliConfigError("problem must be a preset id or an expression mapping")


def _sim_config(cfg: dict, args) -> SimulationConfig:
    sim = dict(cfg.get("simulation", {}))
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.dt_override is not None:
        sim["dt"] = args.dt_override
    if args.paths_override is not None:
        sim["n_paths"] = args.paths_override
    allowed = {"scheme", "dt", "horizon", "n_paths", "seed", "r_cap",
               "store_increments", "stream"}
    unknown = set(sim) - allowed
    if unknown:
        raise CliConfigError(f"simulation: unknown fields {sorted(unknown)}")
    try:
        return SimulationConfig(**sim)
    except ConfigError as exc:
        raise CliConfigError(f"simulation: {exc}") from exc


def _scalar_fn(expr: str, d: int):
    try:
        return parse_expression(expr, d)
    except ExpressionError as exc:
        raise CliConfigError(f"expression {expr!r}: {exc}") from exc


def _parse_r(value):
    if value in ("inf", "Inf", None):
        return math.inf
    return float(value)


# ---------------------------------------------------------------------------
# experiment runners: each returns (report dict, verdict list)


def _run_audit(problem, config, params, out_dir, threads):
    kappa = float(params.get("kappa", 1.0))
    grid_spec = params.get("grid")
    if grid_spec is None:
        grid = default_audit_grid(problem.field.d)
    else:
        grid = np.linspace(float(grid_spec["lo"]), float(grid_spec["hi"]),
                           int(grid_spec["n"]))
        if problem.field.d > 1:
            raise CliConfigError("explicit audit grids are 1-D; omit for d > 1")
        grid = grid.reshape(-1, 1)
    half = grid.shape[0] // 2
    pairs = np.stack([grid[:half], grid[half:2 * half]], axis=1)
    keep = np.einsum("nd,nd->n", pairs[:, 0] - pairs[:, 1],
                     pairs[:, 0] - pairs[:, 1]) > 0
    pairs = pairs[keep][:200]
    try:
        audits = [
            audit_coercivity(problem, kappa, grid),
            audit_monotonicity(problem, kappa, pairs),
            audit_ellipticity(problem, grid),
            audit_growth(problem, grid),
        ]
    except AuditUnavailableError as exc:
        raise CliConfigError(str(exc)) from exc
    rows = [(a.quantity_name, a.worst_value, a.bound, a.margin, a.passed)
            for a in audits]
    reporting.write_csv(os.path.join(out_dir, "audits.csv"),
                        ["quantity", "worst_value", "bound", "margin", "passed"], rows)
    audit_dicts = [reporting.to_jsonable(a) for a in audits]
    plotting.plot_audit_margins(audit_dicts, os.path.join(out_dir, "audit_margins.svg"))
    verdicts = ["pass" if a.passed else "fail" for a in audits]
    return {"audits": audit_dicts, "kappa": kappa}, verdicts


def _run_simulate(problem, config, params, out_dir, threads):
    initial = params.get("initial", 0.0)
    pairs = params.get("coupled_pairs")
    if pairs is not None:
        ens = coupled_simulate(problem, config, pairs)
    else:
        ens = simulate(problem, config, initial)
    terminal = ens.terminal()
    report = {
        "n_paths": ens.n_paths,
        "n_steps": ens.n_steps,
        "exploded_fraction": ens.exploded_fraction,
        "solver_failed_fraction": float(np.mean(ens.solver_failed)),
        "terminal_mean": terminal.mean(axis=0).tolist(),
        "terminal_variance": terminal.var(axis=0, ddof=1).tolist()
        if ens.n_paths > 1 else [0.0] * ens.dim,
    }
    radius = params.get("first_exit_radius")
    if radius is not None:
        exits = first_exit(ens, float(radius))
        finite = np.isfinite(exits)
        report["first_exit"] = {
            "radius": float(radius),
            "fraction_exited": float(finite.mean()),
            "mean_exit_time": float(exits[finite].mean()) if finite.any() else "inf",
        }
    if params.get("export_csv"):
        ensemble_to_csv(ens, os.path.join(out_dir, "paths.csv"))
    if params.get("export_flw1"):
        write_flw1(ens, os.path.join(out_dir, "paths.flw1"))
    reporting.write_csv(os.path.join(out_dir, "terminal_summary.csv"),
                        ["statistic"] + [f"x_{j+1}" for j in range(ens.dim)],
                        [["mean"] + report["terminal_mean"],
                         ["variance"] + report["terminal_variance"]])
    return report, ["pass"]


def _lyap_lambda(problem, params, branch, p):
    lam = params.get("lambda")
    if lam is not None:
        return float(lam)
    if problem.growth is None:
        raise CliConfigError("lambda required for problems without growth metadata")
    if branch == "exp":
        return problem.growth.exp_moment_rate()
    return problem.growth.poly_moment_rate(p)


def _run_lyapunov(problem, config, params, out_dir, threads):
    x = params.get("x", 0.0)
    times = [float(t) for t in params.get("times", [0.5, 1.0])]
    branch = params.get("branch", "exp")
    p = float(params.get("p", 1.0))
    report: dict = {}
    verdicts: list[str] = []
    reports = []
    if branch == "exp":
        alpha = problem.growth.alpha if problem.growth is not None else 1.0
        spec = LyapunovSpec(alpha=alpha, lam=_lyap_lambda(problem, params, "exp", p))
        reports = exp_moment_check(problem, config, x, spec, times,
                                   bias=float(params.get("bias", 0.0)))
    elif branch == "poly":
        lam = _lyap_lambda(problem, params, "poly", p)
        reports = poly_moment_check(problem, config, x, p, lam, times,
                                    bias=float(params.get("bias", 0.0)))
    else:
        raise CliConfigError(f"unknown lyapunov branch {branch!r}")
    report["moment_checks"] = [reporting.to_jsonable(r) for r in reports]
    verdicts += [r.verdict for r in reports]
    reporting.write_csv(os.path.join(out_dir, "moments.csv"),
                        ["time", "estimate", "std_error", "bound", "verdict"],
                        [(r.time, r.estimate, r.std_error, r.bound, r.verdict)
                         for r in reports])
    plotting.plot_moment_reports(report["moment_checks"],
                                 os.path.join(out_dir, "moments.svg"))
    sm = params.get("supermartingale")
    if sm:
        alpha = problem.growth.alpha if problem.growth is not None else 1.0
        spec = LyapunovSpec(alpha=alpha, lam=_lyap_lambda(problem, params, "exp", p))
        sm_report = supermartingale_test(problem, config, x, spec,
                                         float(sm["radius"]),
                                         [float(t) for t in sm["grid"]])
        report["supermartingale"] = reporting.to_jsonable(sm_report)
        verdicts.append(sm_report.verdict)
    steering = params.get("steering")
    if steering:
        st = steering_contraction_check(
            problem, config, steering["x0"], steering["y0"],
            [float(m) for m in steering["m_values"]], threads=threads)
        report["steering"] = reporting.to_jsonable(st)
        verdicts.append(st.verdict)
    return report, verdicts


def _run_flow(problem, config, params, out_dir, threads):
    report: dict = {}
    verdicts: list[str] = []
    grid = params.get("base_grid")
    if grid is not None:
        p = float(params.get("p", 2.0))
        r = _parse_r(params.get("r", "inf"))
        witness = witness_fit(problem, config, np.asarray(grid, dtype=float), p, r)
        wd = reporting.to_jsonable(witness)
        report["witness"] = wd
        verdicts.append("pass" if witness.envelope_pass else "fail")
        reporting.write_csv(os.path.join(out_dir, "witness.csv"),
                            ["x", "g", "g_std_error"],
                            [(float(witness.base_grid[i, 0]), float(witness.g[i]),
                              float(witness.g_std_error[i]))
                             for i in range(witness.g.size)])
        plotting.plot_witness(wd, os.path.join(out_dir, "witness.svg"),
                              log_scale=bool(params.get("log_scale", False)))
    fd = params.get("fd")
    if fd:
        estimate, mom = fd_gradient(problem, config, fd["x"], float(fd["h"]),
                                    float(fd.get("p", 2.0)),
                                    variant=fd.get("variant", "sup-of-expectation"))
        report["fd_gradient"] = {
            "estimate": reporting.to_jsonable(estimate),
            "report": reporting.to_jsonable(mom),
        }
        verdicts.append(mom.verdict)
        reporting.write_csv(os.path.join(out_dir, "gradient.csv"),
                            ["time"] + [f"d{i+1}{j+1}" for i in range(problem.field.d)
                                        for j in range(problem.field.d)],
                            [[float(estimate.times[k])] +
                             estimate.mean_matrix[k].ravel().tolist()
                             for k in range(estimate.times.size)])
    if not report:
        raise CliConfigError("flow experiment needs base_grid and/or fd parameters")
    return report, verdicts


def _run_occupation(problem, config, params, out_dir, threads):
    d = problem.field.d
    mode = params.get("mode", "integral")
    report: dict = {}
    verdicts: list[str] = []
    if mode == "integral":
        f = _scalar_fn(_field(params, "f"), d)
        ens = simulate(problem, config, params.get("x", 0.0))
        est = occupation_integral(ens, f)
        report["occupation"] = reporting.to_jsonable(est)
        verdicts.append("pass")
    elif mode == "khasminskii":
        f = _scalar_fn(_field(params, "f"), d)
        rep = khasminskii_check(problem, config, f, float(_field(params, "R")),
                                params.get("x_grid", [0.0]), threads=threads)
        report["khasminskii"] = reporting.to_jsonable(rep)
        verdicts.append("pass" if (rep.passed or not rep.applicable) else "fail")
    elif mode == "krylov":
        family = []
        for spec in _field(params, "family"):
            family.append({"fn": _scalar_fn(spec["expr"], d),
                           "name": spec.get("name", spec["expr"]),
                           "box": spec.get("box", [[-1.0, 1.0]] * d),
                           "norm": spec.get("norm")})
        table = krylov_ratio(problem, config, params.get("x", 0.0), family,
                             float(params.get("q", d + 2.0)),
                             lam=float(params.get("lambda", 0.0)), threads=threads)
        report["krylov"] = reporting.to_jsonable(table)
        verdicts.append("pass" if table.bounded else "fail")
        reporting.write_csv(os.path.join(out_dir, "ratios.csv"),
                            ["name", "value", "std_error", "f_norm", "ratio"],
                            table.rows)
    elif mode == "exp":
        f = _scalar_fn(_field(params, "f"), d)
        rep = exp_occupation_check(problem, config, params.get("x", 0.0), f,
                                   R0=params.get("R0"), threads=threads)
        report["exp_occupation"] = reporting.to_jsonable(rep)
        verdicts.append(rep.verdict)
    elif mode == "local":
        f = _scalar_fn(_field(params, "f"), d)
        rep = local_exp_occupation_check(problem, config, params.get("x", 0.0),
                                         f, float(_field(params, "R")))
        report["local_exp_occupation"] = reporting.to_jsonable(rep)
        verdicts.append(rep.verdict)
    else:
        raise CliConfigError(f"unknown occupation mode {mode!r}")
    return report, verdicts


def _run_zvonkin(problem, config, params, out_dir, threads):
    R0 = float(params.get("R0", 4.0))
    grid_params = params.get("grid", {})
    grid = PdeGridSpec(
        x_min=float(grid_params.get("x_min", -4.5 * R0)),
        x_max=float(grid_params.get("x_max", 4.5 * R0)),
        n_x=int(grid_params.get("n_x", 721)),
        n_t=int(grid_params.get("n_t", 101)),
        horizon=config.horizon)
    split = split_drift(problem, R0)

    def sigma(t, pts):
        return problem.field.diffusion_batch(t, pts)[:, 0, 0]

    solution, trace = solve_with_smallness(split.b1, sigma, grid,
                                           lam0=float(params.get("lambda0", 1.0)),
                                           support_radius=2.0 * R0)
    print("lambda escalation trace:")
    print(f"{'lambda':>10} {'sup|u|':>12} {'sup|du|':>12} {'accepted':>9}")
    for lam, su, sdu in trace:
        print(f"{lam:>10.4g} {su:>12.6g} {sdu:>12.6g} {str(su + sdu <= 0.5):>9}")
    transform = build_transform(problem, split, solution)
    report = {
        "lambda_trace": [{"lambda": l, "sup_u": su, "sup_du": sdu}
                         for (l, su, sdu) in trace],
        "accepted_lambda": solution.lam,
        "sup_u": solution.sup_u,
        "sup_du": solution.sup_du,
        "sandwich": reporting.to_jsonable(transform.sandwich),
        "R0": R0, "R1": transform.R1,
    }
    verdicts = ["pass" if transform.sandwich.passed else "fail"]
    reporting.write_csv(os.path.join(out_dir, "lambda_trace.csv"),
                        ["lambda", "sup_u", "sup_du"],
                        [(l, su, sdu) for (l, su, sdu) in trace])
    plotting.plot_lambda_trace(trace, os.path.join(out_dir, "lambda_trace.svg"))
    if params.get("export_zvk1", True):
        write_zvk1(os.path.join(out_dir, "transform.zvk1"), solution, transform)
    conj = params.get("conjugacy")
    if conj:
        rep = conjugacy_check(problem, transform, config, conj.get("x", 0.5),
                              dt_levels=tuple(conj.get("dt_levels",
                                                       (1e-2, 1e-3, 1e-4))))
        report["conjugacy"] = reporting.to_jsonable(rep)
        verdicts.append("pass" if rep.passed else "fail")
        plotting.plot_conjugacy(report["conjugacy"],
                                os.path.join(out_dir, "conjugacy.svg"))
    return report, verdicts


def _run_markov(problem, config, params, out_dir, threads):
    d = problem.field.d
    mode = params.get("mode", "semigroup")
    report: dict = {}
    verdicts: list[str] = []
    if mode in ("semigroup", "feller"):
        fspec = _field(params, "f")
        f = BoundedFunction(
            fn=lambda x, e=_scalar_fn(fspec["expr"], d): e(0.0, x),
            sup=float(fspec.get("sup", 1.0)), name=fspec.get("name", fspec["expr"]))
        t = float(params.get("t", 1.0))
        x_grid = params.get("x_grid", np.linspace(-1, 1, 9).tolist())
        if mode == "semigroup":
            prof = semigroup_map(problem, config, f, t, x_grid, threads=threads)
            pd = reporting.to_jsonable(prof)
            report["profile"] = pd
            verdicts.append("pass")
            reporting.write_csv(os.path.join(out_dir, "profile.csv"),
                                ["x", "value", "std_error"],
                                [(float(prof.x_grid[i, 0]), float(prof.values[i]),
                                  float(prof.std_errors[i]))
                                 for i in range(prof.values.size)])
            plotting.plot_semigroup(pd, os.path.join(out_dir, "profile.svg"))
        else:
            rep = feller_refinement_check(problem, config, f, t, x_grid,
                                          threads=threads)
            report["feller"] = reporting.to_jsonable(rep)
            verdicts.append(rep.verdict)
            plotting.plot_semigroup(reporting.to_jsonable(rep.fine),
                                    os.path.join(out_dir, "profile.svg"))
    elif mode == "hitting":
        rep = hitting_probability(problem, config, _field(params, "x0"),
                                  _field(params, "y0"), float(_field(params, "a")),
                                  float(params.get("T", config.horizon)))
        report["hitting"] = reporting.to_jsonable(rep)
        verdicts.append(rep.verdict)
    elif mode == "girsanov":
        rep = girsanov_hitting(problem, config, _field(params, "x0"),
                               _field(params, "y0"), float(_field(params, "a")),
                               float(params.get("T", config.horizon)),
                               m=params.get("m"), N=params.get("N"))
        report["girsanov"] = reporting.to_jsonable(rep)
        verdicts.append(rep.verdict)
    else:
        raise CliConfigError(f"unknown markov mode {mode!r}")
    return report, verdicts


_RUNNERS = {
    "audit": _run_audit,
    "simulate": _run_simulate,
    "lyapunov": _run_lyapunov,
    "flow": _run_flow,
    "occupation": _run_occupation,
    "zvonkin": _run_zvonkin,
    "markov": _run_markov,
}


def run_experiment(config_path: str, args) -> int:
    cfg = _load_config(config_path)
    kind = _field(cfg, "kind")
    if kind not in _RUNNERS:
        raise CliConfigError(f"unknown experiment kind {kind!r}")
    problem = _resolve_problem(_field(cfg, "problem"))
    sim = _sim_config(cfg, args)
    out_dir = args.out_dir or cfg.get("output_dir") or "flowlab-out"
    os.makedirs(out_dir, exist_ok=True)
    threads = resolve_threads(args.threads)
    params = cfg.get("params", {})
    report, verdicts = _RUNNERS[kind](problem, sim, params, out_dir, threads)
    full_report = {
        "kind": kind,
        "problem": cfg.get("problem"),
        "simulation": reporting.to_jsonable(sim),
        "params": reporting.to_jsonable(params),
        "results": report,
        "verdicts": verdicts,
    }
    path = reporting.write_report(full_report, out_dir)
    reporting.write_provenance(out_dir)
    code = reporting.exit_code_for(verdicts)
    print(f"report: {path}")
    print(f"verdicts: {verdicts} -> exit {code}")
    return code


def run_plot(report_path: str, out_dir: str | None) -> int:
    with open(report_path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    target = out_dir or os.path.dirname(os.path.abspath(report_path))
    results = report.get("results", {})
    made = []
    if "audits" in results:
        made.append(plotting.plot_audit_margins(
            results["audits"], os.path.join(target, "audit_margins.svg")))
    if "witness" in results:
        made.append(plotting.plot_witness(
            results["witness"], os.path.join(target, "witness.svg")))
    if "moment_checks" in results:
        made.append(plotting.plot_moment_reports(
            results["moment_checks"], os.path.join(target, "moments.svg")))
    if "profile" in results:
        made.append(plotting.plot_semigroup(
            results["profile"], os.path.join(target, "profile.svg")))
    if "conjugacy" in results:
        made.append(plotting.plot_conjugacy(
            results["conjugacy"], os.path.join(target, "conjugacy.svg")))
    if "lambda_trace" in results:
        trace = [(row["lambda"], row["sup_u"], row["sup_du"])
                 for row in results["lambda_trace"]]
        made.append(plotting.plot_lambda_trace(
            trace, os.path.join(target, "lambda_trace.svg")))
    for path in made:
        print(f"figure: {path}")
    if not made:
        print("no plottable tables in report")
    return 0


def run_list_presets() -> int:
    rows = list_presets()
    header = f"{'preset':<30} {'alpha':>6} {'alpha_prime':>12} {'R0':>5}  description"
    print(header)
    print("-" * len(header))
    for row in rows:
        alpha = "-" if row["alpha"] is None else f"{row['alpha']:g}"
        ap = "-" if row["alpha_prime"] is None else f"{row['alpha_prime']:g}"
        r0 = "-" if row["R0"] is None else f"{row['R0']:g}"
        print(f"{row['name']:<30} {alpha:>6} {ap:>12} {r0:>5}  {row['description']}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="flowlab",
                                     description="stochastic flow experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--dt-override", type=float, default=None)
    p_run.add_argument("--paths-override", type=int, default=None)

    sub.add_parser("list-presets", help="print the preset catalogue")

    p_plot = sub.add_parser("plot", help="render figures from a report.json")
    p_plot.add_argument("report")
    p_plot.add_argument("--out-dir", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config, args)
        if args.command == "list-presets":
            return run_list_presets()
        if args.command == "plot":
            return run_plot(args.report, args.out_dir)
    except CliConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failure distinct from check failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 3


if __name__ == "__main__":
    sys.exit(main())
