"""Command-line interface: solve, compare, simulate, sweep.

Instances are JSON files with the problem parameters and optional solver and
simulation sections; outputs are JSON (scalars) and CSV (tables) files whose
paths share the prefix given by --out. Exit codes: 0 on success, 1 for bad
input (unreadable files, schema violations, invalid parameters), 2 when a
numeric routine fails or the routes disagree beyond tolerance.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from typing import Any, Sequence

import numpy as np

from .bellman_ode import find_beta_star_ode
from .closedform import SolveResult, f_eval, find_beta_star, policy_eval, v_eval
from .errors import (
    BlowUpError,
    BracketError,
    ConfigError,
    DomainError,
    InconclusiveError,
    SolverError,
    UnboundedError,
    ValidationError,
)
from .model import ProblemInstance, build_instance, never_promote_cost
from .policies import (
    DynamicPolicy,
    RandomizedStaticPolicy,
    StaticPolicy,
    best_static,
    best_static_ladder,
    randomized_static_cost,
    static_cost,
)
from .simulate import RNG_DESCRIPTION, SimConfig, simulate_policy

_USAGE_ERRORS = (ValidationError, ConfigError, DomainError)
_NUMERIC_ERRORS = (SolverError, BracketError, InconclusiveError,
                   BlowUpError, UnboundedError)

_INSTANCE_KEYS = {"theta0", "mu", "c", "sigma2", "h", "p", "solver", "sim"}
_SOLVER_KEYS = {"beta_tol", "ode_step", "x_max"}
_SIM_KEYS = {"dt", "horizon", "burn_in_fraction", "replications", "seed"}


class _SchemaError(ValueError):
    """Instance file violates the expected schema."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage problems exit with 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _num(x: float) -> float:
    """Round a float to 12 significant digits for serialization."""
    if not math.isfinite(x):
        return x
    return float(f"{x:.12g}")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")


def _write_csv(path: str, schema: str, header: Sequence[str],
               rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v
                             for v in row])


def _expect_number(obj: dict, key: str, where: str) -> float:
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise _SchemaError(f"{where}.{key} must be a number, got {val!r}")
    return float(val)


def load_instance(path: str) -> tuple[ProblemInstance, dict, dict]:
    """Read an instance JSON file.

    Returns (instance, solver options, simulation options). Raises
    _SchemaError for unknown or malformed keys; ValidationError propagates
    from parameter checks.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _SchemaError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise _SchemaError(f"{path} must hold a JSON object")
    unknown = set(raw) - _INSTANCE_KEYS
    if unknown:
        raise _SchemaError(f"unknown keys in {path}: {sorted(unknown)}")
    missing = {"theta0", "mu", "c", "sigma2", "h", "p"} - set(raw)
    if missing:
        raise _SchemaError(f"missing keys in {path}: {sorted(missing)}")
    for key in ("mu", "c"):
        if not isinstance(raw[key], list) or not raw[key] or any(
                isinstance(v, bool) or not isinstance(v, (int, float))
                for v in raw[key]):
            raise _SchemaError(f"{key} must be a nonempty array of numbers")
    inst = build_instance(
        _expect_number(raw, "theta0", "instance"),
        [float(v) for v in raw["mu"]],
        [float(v) for v in raw["c"]],
        _expect_number(raw, "sigma2", "instance"),
        _expect_number(raw, "h", "instance"),
        _expect_number(raw, "p", "instance"),
    )

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise _SchemaError("solver section must be an object")
    if set(solver) - _SOLVER_KEYS:
        raise _SchemaError(
            f"unknown solver keys: {sorted(set(solver) - _SOLVER_KEYS)}")
    solver = {k: _expect_number(solver, k, "solver") for k in solver}

    sim = raw.get("sim", {})
    if not isinstance(sim, dict):
        raise _SchemaError("sim section must be an object")
    if set(sim) - _SIM_KEYS:
        raise _SchemaError(f"unknown sim keys: {sorted(set(sim) - _SIM_KEYS)}")
    sim = {k: _expect_number(sim, k, "sim") for k in sim}
    for key in ("replications", "seed"):
        if key in sim:
            if sim[key] != int(sim[key]):
                raise _SchemaError(f"sim.{key} must be an integer")
            sim[key] = int(sim[key])
    return inst, solver, sim


def _parse_mix(spec: str, inst: ProblemInstance) -> tuple[float, ...]:
    parts = spec.split(",")
    if len(parts) != inst.n_activities + 1:
        raise _SchemaError(
            f"mix weights must list one weight per ladder drift "
            f"({inst.n_activities + 1}), got {len(parts)}")
    try:
        return tuple(float(w) for w in parts)
    except ValueError as exc:
        raise _SchemaError(f"bad mix weights {spec!r}: {exc}") from exc


def _parse_policy(spec: str, inst: ProblemInstance, beta_tol: float | None):
    """Build the policy named by a --policy spec.

    Returns (policy object, descriptor string, exact reference cost or None).
    """
    if spec == "dynamic":
        res = find_beta_star(inst, tol=beta_tol)
        return (DynamicPolicy.from_result(res), "dynamic", res.beta_star)
    if spec.startswith("static:"):
        theta = float(spec.split(":", 1)[1])
        return (StaticPolicy(inst, theta), f"static theta={_num(theta)}",
                static_cost(inst, theta))
    if spec.startswith("mix:"):
        weights = _parse_mix(spec.split(":", 1)[1], inst)
        pol = RandomizedStaticPolicy(inst, inst.theta, weights)
        return (pol, f"mix weights={','.join(f'{w:.12g}' for w in weights)}",
                randomized_static_cost(inst, inst.theta, weights))
    raise _SchemaError(
        f"policy must be dynamic, static:<drift>, or mix:<w0,...>, got {spec!r}")


def _solve_with_cross_check(inst: ProblemInstance, solver: dict,
                            beta_tol: float | None) -> tuple[SolveResult, float]:
    """Run both routes; SolverError if they disagree beyond 1e-5 relative."""
    tol = beta_tol if beta_tol is not None else solver.get("beta_tol")
    res = find_beta_star(inst, tol=tol)
    ode = find_beta_star_ode(
        inst,
        tol=1e-7 * never_promote_cost(inst),
        step=solver.get("ode_step"),
        x_max=solver.get("x_max"),
    )
    delta = abs(res.beta_star - ode)
    if delta > 1e-5 * max(1.0, res.beta_star):
        raise SolverError(
            f"solution routes disagree: band matching {res.beta_star!r} vs "
            f"integration {ode!r}")
    return res, delta


def _grid_span(res: SolveResult) -> float:
    inst = res.instance
    z1 = res.thresholds[0]
    if z1 > 0.0:
        return 1.5 * z1
    return 5.0 * inst.sigma2 / (2.0 * abs(inst.theta0))


def _cmd_solve(args: argparse.Namespace) -> int:
    inst, solver, _ = load_instance(args.instance)
    res, delta = _solve_with_cross_check(inst, solver, args.beta_tol)
    payload = {
        "beta_star": res.beta_star,
        "thresholds": list(res.thresholds),
        "beta_lower": res.beta_lower,
        "bracket_upper": res.bracket_upper,
        "tail_residual": res.tail_residual,
        "max_bellman_residual": res.max_bellman_residual,
        "ode_cross_check_delta": delta,
        "iterations": res.iterations,
    }
    _write_json(args.out + ".json", payload)
    span = _grid_span(res)
    zs = np.linspace(0.0, span, 501)
    rows = [(float(z), v_eval(res, float(z)), f_eval(res, float(z)),
             policy_eval(res, float(z))) for z in zs]
    _write_csv(
        args.out + "_grid.csv",
        "z = state (queue length); v = marginal relative value (cost per "
        "unit state); f = relative value net of reflection credit (cost); "
        "theta_star = optimal drift (state per unit time)",
        ("z", "v", "f", "theta_star"), rows)
    print(f"beta_star = {res.beta_star:.12g}")
    print("thresholds = " + ", ".join(f"{z:.12g}" for z in res.thresholds))
    print(f"route agreement delta = {delta:.3g}")
    print(f"wrote {args.out}.json and {args.out}_grid.csv")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    inst, solver, _ = load_instance(args.instance)
    res, _ = _solve_with_cross_check(inst, solver, args.beta_tol)
    beta = res.beta_star

    rows: list[tuple[str, str, float, float]] = []

    def add(policy: str, detail: str, cost: float) -> None:
        rows.append((policy, detail, cost, 100.0 * (cost - beta) / cost))

    add("dynamic", "nested thresholds", beta)
    for j in range(inst.j_star + 1):
        add("static", f"theta={inst.theta[j]:.12g}",
            static_cost(inst, inst.theta[j]))
    theta_c, cost_c_ = best_static(inst)
    add("static-best", f"theta={theta_c:.12g}", cost_c_)
    for spec in args.mix or []:
        weights = _parse_mix(spec, inst)
        add("mix", ",".join(f"{w:.12g}" for w in weights),
            randomized_static_cost(inst, inst.theta, weights))

    _write_csv(
        args.out + ".csv",
        "policy = rule family; detail = parameters; cost_rate = exact "
        "long-run average cost (cost per unit time); excess_over_optimal_pct "
        "= percent of cost_rate above the optimal rate",
        ("policy", "detail", "cost_rate", "excess_over_optimal_pct"), rows)

    theta_l, cost_l = best_static_ladder(inst)
    savings = 100.0 * (cost_l - beta) / cost_l
    print(f"optimal rate {beta:.12g} vs best static ladder drift "
          f"{theta_l:.12g} at {cost_l:.12g}: savings {savings:.2f}%")
    print(f"wrote {args.out}.csv")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    inst, solver, sim = load_instance(args.instance)
    beta_tol = args.beta_tol if args.beta_tol is not None else solver.get("beta_tol")
    policy, label, reference = _parse_policy(args.policy, inst, beta_tol)
    if args.seed is not None:
        sim["seed"] = args.seed
    config = SimConfig(**sim)
    stride = None
    if args.trace:
        stride = max(1, config.n_steps // 2000)
    report = simulate_policy(policy, config, trace_stride=stride)
    payload = {
        "policy": label,
        "config": {
            "dt": config.dt,
            "horizon": config.horizon,
            "burn_in_fraction": config.burn_in_fraction,
            "replications": config.replications,
            "seed": config.seed,
            "initial_state": config.initial_state,
        },
        "cost_rate": report.cost_rate,
        "cost_rate_se": report.cost_rate_se,
        "cost_ci95": list(report.cost_ci),
        "outlay_rate": report.outlay_rate,
        "holding_rate": report.holding_rate,
        "idleness_cost_rate": report.idleness_cost_rate,
        "mean_queue": report.mean_queue,
        "mean_queue_se": report.mean_queue_se,
        "idleness_rate": report.idleness_rate,
        "idleness_rate_se": report.idleness_rate_se,
        "exact_reference": reference,
        "rel_error_vs_reference": (
            abs(report.cost_rate - reference) / abs(reference)
            if reference else None),
        "rng": RNG_DESCRIPTION,
    }
    _write_json(args.out + ".json", payload)
    written = [args.out + ".json"]
    if args.trace:
        times, states, idle = report.trace
        _write_csv(
            args.out + "_trace.csv",
            "time = simulated time; state = queue length after the step; "
            "cumulative_idleness = reflected mass accumulated since time "
            "zero (state units), first replication",
            ("time", "state", "cumulative_idleness"),
            list(zip(map(float, times), map(float, states), map(float, idle))))
        written.append(args.out + "_trace.csv")
    print(f"{label}: cost rate {report.cost_rate:.6g} "
          f"(SE {report.cost_rate_se:.3g}), reference {reference:.6g}")
    print("wrote " + " and ".join(written))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    inst, solver, _ = load_instance(args.instance)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise _SchemaError(f"bad sweep values {args.values!r}: {exc}") from exc
    if len(values) < 2:
        raise _SchemaError("sweep needs at least two values")

    rows = []
    betas = []
    n = inst.n_activities
    for val in values:
        params = dict(theta0=inst.theta0, mu=inst.mu, c=inst.c,
                      sigma2=inst.sigma2, h=inst.h, p=inst.p)
        params[args.param] = val
        swept = build_instance(**params)
        res, _ = _solve_with_cross_check(swept, solver, args.beta_tol)
        _, static_best = best_static_ladder(swept)
        savings = 100.0 * (static_best - res.beta_star) / static_best
        rows.append((args.param, val, res.beta_star, static_best, savings)
                    + tuple(res.thresholds))
        betas.append(res.beta_star)

    header = (args.param, "value", "beta_star", "best_static_cost",
              "savings_pct") + tuple(f"threshold_{k}" for k in range(1, n + 1))
    _write_csv(
        args.out + ".csv",
        "one solved instance per row; value = swept parameter value; "
        "beta_star = optimal cost rate; best_static_cost = cheapest ladder "
        "static rate; savings_pct = percent saved by the dynamic policy; "
        "threshold_k = promotion thresholds, outermost first (state units)",
        ("param",) + header[1:], rows)

    diffs = np.diff(betas)
    if np.all(diffs > 0):
        trend = "strictly increasing"
    elif np.all(diffs < 0):
        trend = "strictly decreasing"
    elif np.all(diffs >= 0) or np.all(diffs <= 0):
        trend = "monotone with ties"
    else:
        trend = "not monotone"
    print(f"beta_star is {trend} in {args.param} over the given values")
    print(f"wrote {args.out}.csv")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="driftq",
        description="Optimal drift control of a reflected queue: solve for "
                    "the nested-threshold policy, compare against static "
                    "benchmarks, simulate, and sweep parameters.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--instance", required=True,
                       help="path to the instance JSON file")
        p.add_argument("--out", required=True,
                       help="output path prefix (files get .json/.csv suffixes)")
        p.add_argument("--beta-tol", type=float, default=None, dest="beta_tol",
                       help="bisection tolerance for the optimal rate")

    p_solve = sub.add_parser(
        "solve", help="optimal rate, thresholds, and value-function grid")
    common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_cmp = sub.add_parser(
        "compare", help="exact cost table: dynamic vs static benchmarks")
    common(p_cmp)
    p_cmp.add_argument("--mix", action="append", default=[],
                       help="randomized static benchmark: comma-separated "
                            "weights, one per ladder drift (repeatable)")
    p_cmp.set_defaults(func=_cmd_compare)

    p_sim = sub.add_parser("simulate", help="Monte Carlo estimate of a policy")
    common(p_sim)
    p_sim.add_argument("--policy", default="dynamic",
                       help="dynamic | static:<drift> | mix:<w0,...,wK>")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="override the simulation seed")
    p_sim.add_argument("--trace", action="store_true",
                       help="also write a first-replication trace CSV")
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser(
        "sweep", help="re-solve while sweeping one parameter")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         choices=("h", "p", "sigma2"),
                         help="which parameter to sweep")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated parameter values")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (_SchemaError, OSError) as exc:
        print(f"driftq: input error: {exc}", file=sys.stderr)
        return 1
    except _USAGE_ERRORS as exc:
        print(f"driftq: invalid parameters: {exc}", file=sys.stderr)
        return 1
    except _NUMERIC_ERRORS as exc:
        print(f"driftq: numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
