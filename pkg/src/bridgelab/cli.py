"""Command line experiment runner.

Every subcommand binds one verification experiment: it assembles an
ExperimentConfig from an optional key=value file plus flag overrides,
runs the corresponding library operation, prints verdict JSON lines (or a
plot-ready CSV table with --format csv) and exits 0 only if every verdict
passed.  Exit codes: 0 pass, 1 verdict failure, 2 usage error, 3
numerical/solver error.
"""

import argparse
import sys
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import battery as battery_mod
from .bridges import BridgeProblem, simulate_bridge_batch, time_grid
from .couplings import coupling_bound_envelope, couple_comparison_1d, envelope_report, verify_gradient_estimate
from .errors import BridgeLabError, ConfigError
from .invariant import (DiscreteDistribution, choose_domain,
                        solve_ground_state, verify_contraction,
                        verify_marginal_convergence)
from .pathspace import verify_concentration, verify_covariance_identity
from .potentials import quadratic_model, sine_model
from .projection import project_convex, project_entropic, simplex_oracle
from .reports import (ExperimentConfig, FieldSpec, VerdictReport,
                      nonnegative, parse_config_file, positive, render_csv,
                      render_jsonl, write_csv, write_jsonl)
from .stein import verify_stein_bound

Table = Tuple[Sequence[str], List[dict]]
Outcome = Tuple[List[VerdictReport], Optional[Table]]


def _model_from(cfg: ExperimentConfig):
    kind = cfg["model"]
    if kind == "quadratic":
        return quadratic_model(cfg["a"])
    if kind == "quadratic_shifted":
        return quadratic_model(cfg["a"], shift=cfg["b"])
    if kind == "sine":
        return sine_model(cfg["eps"])
    raise ConfigError(f"unknown model kind {kind!r}")


_MODEL_KEYS = {
    "model": FieldSpec("str", default="quadratic"),
    "a": FieldSpec("float", default=1.0),
    "b": FieldSpec("float", default=0.0),
    "eps": FieldSpec("float", default=0.2),
}


def _verdict(cfg, experiment, claim, measured, bounds, ok, runtime=0.0):
    return VerdictReport(experiment=experiment, claim=claim,
                         measured=measured, bounds=bounds,
                         verdict="pass" if ok else "fail",
                         seed=int(cfg["seed"]), config_digest=cfg.digest,
                         runtime=runtime)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def run_characteristic(cfg: ExperimentConfig) -> Outcome:
    from .potentials import (reciprocal_characteristic,
                             reciprocal_characteristic_via_generator,
                             from_callable)
    model = _model_from(cfg)
    grid = np.linspace(cfg["zmin"], cfg["zmax"],
                       int(cfg["points"])).reshape(-1, 1)
    closed = reciprocal_characteristic(model, cfg["t"], grid)
    generator = reciprocal_characteristic_via_generator(model, cfg["t"], grid)
    fd = reciprocal_characteristic(from_callable(model.U, d=model.d),
                                   cfg["t"], grid)
    gap_gen = float(np.max(np.abs(closed - generator)))
    gap_fd = float(np.max(np.abs(closed - fd)))
    ok = gap_gen < cfg["tol_closed"] and gap_fd < cfg["tol_fd"]
    reports = [_verdict(
        cfg, "characteristic",
        "curvature-field routes (closed, generator, finite-difference) agree",
        {"generator_gap": gap_gen, "fd_gap": gap_fd},
        {"generator_gap": cfg["tol_closed"], "fd_gap": cfg["tol_fd"]}, ok)]
    rows = [{"z": float(z[0]), "closed": float(c[0]), "generator": float(g[0]),
             "finite_difference": float(f[0])}
            for z, c, g, f in zip(grid, closed, generator, fd)]
    return reports, (("z", "closed", "generator", "finite_difference"), rows)


def run_simulate(cfg: ExperimentConfig) -> Outcome:
    model = _model_from(cfg)
    problem = BridgeProblem(x=[cfg["x"]], y=[cfg["y"]], T=cfg["T"],
                            model=model)
    n_steps = int(cfg["steps"])
    pos = simulate_bridge_batch(problem, n_steps, int(cfg["seed"]),
                                drift_mode=cfg["drift"],
                                alpha=cfg["a"] if cfg["drift"] == "exact_ou"
                                else None,
                                n_paths=int(cfg["paths"]))
    times = time_grid(cfg["T"], n_steps)
    mean = pos[:, :, 0].mean(axis=0)
    sd = pos[:, :, 0].std(axis=0)
    ok = bool(np.all(np.isfinite(pos)))
    reports = [_verdict(
        cfg, "simulate", "bridge paths pinned at both ends simulate stably",
        {"max_abs": float(np.max(np.abs(pos))),
         "mid_mean": float(mean[n_steps // 2]),
         "mid_sd": float(sd[n_steps // 2])},
        {}, ok)]
    rows = [{"t": float(t), "mean": float(m), "sd": float(s),
             "path0": float(p)}
            for t, m, s, p in zip(times, mean, sd, pos[0, :, 0])]
    return reports, (("t", "mean", "sd", "path0"), rows)


def run_coupling(cfg: ExperimentConfig) -> Outcome:
    alpha, T = cfg["alpha"], cfg["T"]
    bound_at_t = float(coupling_bound_envelope(alpha, T, cfg["t"],
                                               abs(cfg["dx"]),
                                               abs(cfg["dy"])))
    n_steps = max(2, int(round(2.0 * T / cfg["dt"])))
    rep = envelope_report(quadratic_model(alpha), T, [0.0], [0.0],
                          [cfg["dx"]], [cfg["dy"]], n_steps=n_steps,
                          seed=int(cfg["seed"]), n_paths=int(cfg["paths"]))
    ok = rep.frac_violating <= 1e-3
    reports = [_verdict(
        cfg, "coupling",
        "same-noise coupled bridges stay inside the sinh envelope",
        {"bound_at_t": bound_at_t, "violation_frac": rep.frac_violating,
         "max_excess": rep.max_excess},
        {"violation_frac": 1e-3}, ok)]
    rows = [{"t": float(t), "max_difference": float(d), "envelope": float(e)}
            for t, d, e in zip(rep.times, rep.max_difference, rep.envelope)]
    return reports, (("t", "max_difference", "envelope"), rows)


def run_gradient(cfg: ExperimentConfig) -> Outcome:
    problem = BridgeProblem(x=[cfg["x"]], y=[cfg["y"]], T=cfg["T"],
                            model=quadratic_model(cfg["alpha"]))
    if cfg["f"] == "linear":
        f, grad_f = (lambda p: p[:, 0]), (lambda p: np.ones_like(p))
    elif cfg["f"] == "tanh":
        f, grad_f = (lambda p: np.tanh(p[:, 0])), (
            lambda p: 1.0 - np.tanh(p) ** 2)
    else:
        raise ConfigError(f"unknown observable {cfg['f']!r}")
    chk = verify_gradient_estimate(problem, f, grad_f, cfg["t"],
                                   perturb=cfg["perturb"],
                                   budget=int(cfg["budget"]),
                                   seed=int(cfg["seed"]))
    reports = [_verdict(
        cfg, "gradient",
        "pin sensitivity of marginal observables obeys the sinh-ratio bound",
        {"lhs": chk.lhs, "rhs": chk.rhs, "std_error": chk.std_error,
         "coefficient": chk.coefficient},
        {"lhs": chk.rhs + 3.0 * chk.std_error}, chk.passed)]
    return reports, None


def run_comparison(cfg: ExperimentConfig) -> Outcome:
    base = quadratic_model(cfg["alpha"])
    shifted = quadratic_model(cfg["alpha"], shift=cfg["beta"])
    n_steps = max(2, int(round(2.0 * cfg["T"] / cfg["dt"])))
    rep = couple_comparison_1d(base, shifted, cfg["x"], cfg["y"], cfg["T"],
                               n_steps=n_steps, seed=int(cfg["seed"]),
                               n_paths=int(cfg["paths"]), slack_constant=1.0)
    ok = rep.frac_violating <= 1e-3
    reports = [_verdict(
        cfg, "comparison",
        "dominated curvature slope keeps the coupled path below its partner",
        {"violation_frac": rep.frac_violating, "gate_margin": rep.gate_margin,
         "min_gap": rep.min_gap, "slack": rep.slack},
        {"violation_frac": 1e-3}, ok)]
    return reports, None


def run_concentration(cfg: ExperimentConfig) -> Outcome:
    problem = BridgeProblem(x=[cfg["x"]], y=[cfg["y"]], T=cfg["T"],
                            model=quadratic_model(cfg["alpha"]))
    rep = verify_concentration(problem, cfg["t"], int(cfg["budget"]),
                               cfg["R"], seed=int(cfg["seed"]))
    rows = [{"R": r.R, "bound": r.bound, "empirical": r.estimate.p_hat,
             "ci_low": r.estimate.ci_low, "ci_high": r.estimate.ci_high}
            for r in rep.rows]
    reports = [_verdict(
        cfg, "concentration",
        "bridge marginal tails decay at the Gaussian rate exp(-xi R^2)",
        {f"ci_high_R{r.R:g}": r.estimate.ci_high for r in rep.rows},
        {f"ci_high_R{r.R:g}": r.bound for r in rep.rows}, rep.all_passed)]
    return reports, (("R", "bound", "empirical", "ci_low", "ci_high"), rows)


def run_covariance(cfg: ExperimentConfig) -> Outcome:
    pairs = battery_mod._covariance_battery(cfg["T"], 512)
    wanted = cfg["pair"]
    if wanted != "all":
        pairs = [p for p in pairs if p[0] == wanted]
        if not pairs:
            raise ConfigError(f"unknown pair {wanted!r}")
    rows = []
    all_ok = True
    measured, bounds = {}, {}
    for label, h, g in pairs:
        chk = verify_covariance_identity(cfg["alpha"], cfg["T"], h, g,
                                         budget=int(cfg["budget"]),
                                         seed=int(cfg["seed"]))
        all_ok &= chk.passed
        measured[label] = chk.measured
        bounds[label] = chk.predicted
        rows.append({"pair": label, "measured": chk.measured,
                     "predicted": chk.predicted,
                     "std_error": chk.std_error,
                     "z_score": (chk.measured - chk.predicted)
                     / chk.std_error if chk.std_error else 0.0})
    reports = [_verdict(
        cfg, "covariance",
        "sampled increment covariances match the path-space inner product",
        measured, bounds, all_ok)]
    return reports, (("pair", "measured", "predicted", "std_error",
                      "z_score"), rows)


def run_stein(cfg: ExperimentConfig) -> Outcome:
    model = sine_model(cfg["eps"])
    reps = verify_stein_bound(model, cfg["T"], budget=int(cfg["budget"]),
                              seed=int(cfg["seed"]),
                              coupling_paths=int(cfg["coupling_paths"]),
                              workers=int(cfg.values.get("workers", 1)))
    rows = []
    ok = True
    for rep in reps:
        ok &= rep.bound_holds and rep.sandwich_consistent
        rows.append({"T": rep.T, "w1_lower": rep.w1_lower,
                     "w1_upper": rep.w1_upper, "w1_bound": rep.w1_bound,
                     "C": rep.C_estimate.value, "C_se": rep.C_estimate.std_error,
                     "sup_grad": rep.sup_grad_script_U,
                     "best_functional": rep.best_functional})
    reports = [_verdict(
        cfg, "stein",
        "W1 to the pinned Gaussian is at most C T^2 sup|grad script_U|",
        {f"w1_lower_T{r.T:g}": r.w1_lower for r in reps},
        {f"w1_lower_T{r.T:g}": r.w1_bound for r in reps}, ok)]
    return reports, (("T", "w1_lower", "w1_upper", "w1_bound", "C", "C_se",
                      "sup_grad", "best_functional"), rows)


_POTENTIALS = {
    "harmonic": lambda z: 0.5 * z ** 2,
    "double_well": lambda z: (z ** 2 - 1.0) ** 2,
}


def run_invariant(cfg: ExperimentConfig) -> Outcome:
    name = cfg["potential"]
    if name not in _POTENTIALS:
        raise ConfigError(f"unknown potential {name!r}")
    script_U = _POTENTIALS[name]
    L = cfg["L"] if cfg["L"] > 0 else choose_domain(script_U)
    gs = solve_ground_state(script_U, L, int(cfg["n"]))
    measured = {"k": gs.k, "variance": gs.variance(),
                "residual": gs.residual, "L": gs.L}
    bounds = {"residual": 1e-8}
    ok = gs.residual <= 1e-8
    reports = [_verdict(
        cfg, "invariant",
        "squared ground state of -1/2 d^2 + script_U is the bridge-"
        "invariant density",
        measured, bounds, ok)]
    if name == "harmonic" and cfg["budget"] > 0:
        ladder = verify_marginal_convergence(
            quadratic_model(1.0), cfg["x"], cfg["y"], cfg["T_ladder"],
            budget=int(cfg["budget"]), seed=int(cfg["seed"]),
            ground_state=None)
        reports.append(_verdict(
            cfg, "invariant-ladder",
            "midpoint marginals approach the invariant density as T grows",
            {f"w1_T{r.T:g}": r.w1 for r in ladder.rows},
            {"final_w1": 0.02},
            ladder.monotone_decreasing and ladder.final_w1 < 0.02))
    rows = [{"z": float(z), "psi": float(p), "V": float(v), "m": float(m)}
            for z, p, v, m in zip(gs.z, gs.psi, gs.V, gs.m)]
    return reports, (("z", "psi", "V", "m"), rows)


def run_contraction(cfg: ExperimentConfig) -> Outcome:
    mu = DiscreteDistribution.dirac(cfg["x0"], cfg["y0"])
    nu = DiscreteDistribution.dirac(cfg["x1"], cfg["y1"])
    rep = verify_contraction(mu, nu, quadratic_model(cfg["alpha"]),
                             T=cfg["T"], p=cfg["p"],
                             budget=int(cfg["budget"]), seed=int(cfg["seed"]))
    reports = [_verdict(
        cfg, "contraction",
        "bridge-mixture marginals contract endpoint distance by "
        "1/(sqrt(2) cosh(alpha T))",
        {"measured": rep.measured, "endpoint_distance": rep.endpoint_distance,
         "ci_low": rep.ci_low, "ci_high": rep.ci_high},
        {"measured": rep.bound}, rep.passed)]
    return reports, None


def run_project(cfg: ExperimentConfig) -> Outcome:
    rng = np.random.default_rng(int(cfg["seed"]))
    P, mu0, muN = battery_mod._random_instance(
        rng, int(cfg["S"]), int(cfg["N"]))
    cost = cfg["cost"]
    if cost == "entropic":
        res = project_entropic(P, mu0, muN)
    else:
        res = project_convex(P, mu0, muN, cost=cost)
    measured = {"cost": res.cost, "endpoint_residual": res.endpoint_residual,
                "iterations": float(res.iterations)}
    bounds = {"endpoint_residual": 1e-8}
    ok = res.converged and res.endpoint_residual <= 1e-8
    if P.probs.size <= 4000:
        oracle = simplex_oracle(P, mu0, muN, cost)
        gap = abs(res.cost - battery_mod._path_cost(oracle, P.probs, cost))
        measured["oracle_gap"] = gap
        bounds["oracle_gap"] = 1e-6
        ok = ok and gap <= 1e-6
    reports = [_verdict(
        cfg, "project",
        "projection onto the endpoint-factorizing class of a Markov "
        "reference", measured, bounds, ok)]
    K = res.Q.endpoint_matrix()
    rows = [{"x0": int(i), "xN": int(j), "mass": float(K[i, j])}
            for i in range(K.shape[0]) for j in range(K.shape[1])]
    return reports, (("x0", "xN", "mass"), rows)


def run_verify_all(cfg: ExperimentConfig) -> Outcome:
    results = battery_mod.run_battery(seed=int(cfg["seed"]),
                                      scale=cfg["scale"],
                                      workers=int(cfg.values.get("workers", 1)))
    reports = []
    rows = []
    for res in results:
        reports.append(VerdictReport(
            experiment=f"criterion-{res.cid:02d}-{res.name}",
            claim=res.claim,
            measured={r.label: r.measured for r in res.rows},
            bounds={r.label: r.bound for r in res.rows},
            verdict=res.verdict, seed=int(cfg["seed"]),
            config_digest=cfg.digest, runtime=res.runtime))
        for r in res.rows:
            rows.append({"criterion": res.cid, "name": res.name,
                         "check": r.label, "measured": r.measured,
                         "bound": r.bound, "passed": int(r.passed)})
    return reports, (("criterion", "name", "check", "measured", "bound",
                      "passed"), rows)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _schema(**extra) -> Dict[str, FieldSpec]:
    schema = {"seed": FieldSpec("int", default=7)}
    schema.update(extra)
    return schema


EXPERIMENTS: Dict[str, Tuple[str, Dict[str, FieldSpec], Callable]] = {
    "characteristic": (
        "curvature-field routes agree on a grid",
        _schema(t=FieldSpec("float", default=0.0),
                points=FieldSpec("int", default=100, check=positive),
                zmin=FieldSpec("float", default=-2.0),
                zmax=FieldSpec("float", default=2.0),
                tol_closed=FieldSpec("float", default=1e-6, check=positive),
                tol_fd=FieldSpec("float", default=1e-3, check=positive),
                **_MODEL_KEYS),
        run_characteristic),
    "simulate": (
        "pinned bridge paths simulate stably",
        _schema(x=FieldSpec("float", default=0.0),
                y=FieldSpec("float", default=1.0),
                T=FieldSpec("float", default=1.0, check=positive),
                steps=FieldSpec("int", default=400, check=positive),
                paths=FieldSpec("int", default=100, check=positive),
                drift=FieldSpec("str", default="exact_ou"),
                **_MODEL_KEYS),
        run_simulate),
    "coupling": (
        "coupled bridges obey the sinh contraction envelope",
        _schema(alpha=FieldSpec("float", default=1.0, check=positive),
                T=FieldSpec("float", default=1.0, check=positive),
                t=FieldSpec("float", default=0.0),
                dx=FieldSpec("float", default=1.0),
                dy=FieldSpec("float", default=0.0),
                dt=FieldSpec("float", default=1e-3, check=positive),
                paths=FieldSpec("int", default=200, check=positive)),
        run_coupling),
    "gradient": (
        "marginal observables have sinh-ratio bounded pin sensitivity",
        _schema(alpha=FieldSpec("float", default=1.0, check=positive),
                x=FieldSpec("float", default=0.5),
                y=FieldSpec("float", default=-0.5),
                T=FieldSpec("float", default=1.0, check=positive),
                t=FieldSpec("float", default=0.0),
                f=FieldSpec("str", default="linear"),
                perturb=FieldSpec("str", default="initial"),
                budget=FieldSpec("int", default=4096, check=positive)),
        run_gradient),
    "comparison": (
        "curvature-slope ordering orders coupled paths",
        _schema(alpha=FieldSpec("float", default=1.0, check=positive),
                beta=FieldSpec("float", default=-0.5),
                x=FieldSpec("float", default=0.0),
                y=FieldSpec("float", default=0.0),
                T=FieldSpec("float", default=1.0, check=positive),
                dt=FieldSpec("float", default=1e-3, check=positive),
                paths=FieldSpec("int", default=200, check=positive)),
        run_comparison),
    "concentration": (
        "marginal tails decay at the Gaussian rate",
        _schema(alpha=FieldSpec("float", default=1.0, check=positive),
                T=FieldSpec("float", default=1.0, check=positive),
                t=FieldSpec("float", default=0.0),
                x=FieldSpec("float", default=0.0),
                y=FieldSpec("float", default=0.0),
                budget=FieldSpec("int", default=100_000, check=positive),
                R=FieldSpec("float_list", default=(0.25, 0.5, 1.0, 1.5, 2.0))),
        run_concentration),
    "covariance": (
        "increment covariances match the path-space inner product",
        _schema(alpha=FieldSpec("float", default=1.0, check=positive),
                T=FieldSpec("float", default=1.0, check=positive),
                budget=FieldSpec("int", default=100_000, check=positive),
                pair=FieldSpec("str", default="all")),
        run_covariance),
    "stein": (
        "W1 to the pinned Gaussian is below C T^2 sup|grad script_U|",
        _schema(eps=FieldSpec("float", default=0.2),
                T=FieldSpec("float_list", default=(0.25, 0.5, 1.0)),
                budget=FieldSpec("int", default=200_000, check=positive),
                coupling_paths=FieldSpec("int", default=100, check=positive)),
        run_stein),
    "invariant": (
        "squared ground state is the bridge-invariant density",
        _schema(potential=FieldSpec("str", default="harmonic"),
                L=FieldSpec("float", default=10.0),
                n=FieldSpec("int", default=8001, check=positive),
                x=FieldSpec("float", default=1.5),
                y=FieldSpec("float", default=-1.0),
                T_ladder=FieldSpec("float_list", default=(0.5, 1.0, 2.0, 4.0)),
                budget=FieldSpec("int", default=50_000, check=nonnegative)),
        run_invariant),
    "contraction": (
        "mixture marginals contract endpoint distance",
        _schema(alpha=FieldSpec("float", default=1.0, check=positive),
                T=FieldSpec("float", default=1.0, check=positive),
                p=FieldSpec("float", default=1.0, check=positive),
                x0=FieldSpec("float", default=1.0),
                y0=FieldSpec("float", default=1.0),
                x1=FieldSpec("float", default=0.0),
                y1=FieldSpec("float", default=0.0),
                budget=FieldSpec("int", default=100_000, check=positive)),
        run_contraction),
    "project": (
        "endpoint-class projection of a discrete path measure",
        _schema(S=FieldSpec("int", default=3, check=positive),
                N=FieldSpec("int", default=3, check=positive),
                cost=FieldSpec("str", default="entropic")),
        run_project),
    "verify-all": (
        "full verification battery",
        _schema(scale=FieldSpec("float", default=1.0, check=positive)),
        run_verify_all),
}


def list_experiments() -> List[Tuple[str, str]]:
    catalog = [(name, claim) for name, (claim, _, _) in EXPERIMENTS.items()]
    catalog.append(("list", "print this catalog"))
    return catalog


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgelab",
        description="Quantitative verification experiments for Langevin "
                    "bridges: couplings, path-space functional inequalities, "
                    "invariant measures and reciprocal-class projections.")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name, (claim, schema, _) in EXPERIMENTS.items():
        sp = sub.add_parser(name, help=claim, description=claim)
        sp.add_argument("--config", default=None,
                        help="key=value config file")
        sp.add_argument("--workers", type=int, default=1,
                        help="worker threads for parallel batches")
        sp.add_argument("--out", default=None, help="output file path")
        sp.add_argument("--format", choices=("json", "csv"), default="json",
                        help="output format (verdict JSON lines or CSV table)")
        for key, spec in schema.items():
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=f"cfg_{key}", default=None,
                            metavar="V", help=spec.help or None)
    sub.add_parser("list", help="print the experiment catalog",
                   description="print every subcommand with the claim it "
                               "verifies")
    return parser


def _collect_config(name: str, schema, args) -> ExperimentConfig:
    sources = []
    if args.config:
        sources.append(parse_config_file(args.config))
    overrides = {}
    for key in schema:
        raw = getattr(args, f"cfg_{key}", None)
        if raw is not None:
            overrides[key] = raw
    sources.append(overrides)
    return ExperimentConfig.build(name, schema, *sources)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_help()
        return 2
    if args.subcommand == "list":
        catalog = list_experiments()
        for name, claim in catalog:
            print(f"{name:16s} {claim}")
        print(f"{len(catalog)} experiments registered")
        return 0

    claim, schema, runner = EXPERIMENTS[args.subcommand]
    try:
        cfg = _collect_config(args.subcommand, schema, args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    cfg.values["workers"] = args.workers  # not hashed: scheduling only

    start = time.perf_counter()
    try:
        reports, table = runner(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BridgeLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    elapsed = time.perf_counter() - start

    if args.format == "csv" and table is not None:
        fieldnames, rows = table
        text = render_csv(fieldnames, rows)
    else:
        text = render_jsonl(reports)
    sys.stdout.write(text)
    if args.out:
        if args.format == "csv" and table is not None:
            write_csv(args.out, *table)
        else:
            write_jsonl(args.out, reports)

    for rep in reports:
        line = f"# {rep.experiment}: {rep.verdict.upper()}"
        print(line, file=sys.stderr)
    print(f"# total runtime {elapsed:.2f}s", file=sys.stderr)
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
