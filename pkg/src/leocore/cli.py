"""Command-line interface.

Every command prints one JSON report ``{command, config, results, checks}``
(plus ``timing_ms`` with ``--timing``). Exit status: 0 when all checks pass,
2 for configuration errors, 3 for failed checks, 4 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, apps, verify
from .iterative import (
    IterationError,
    PreconditionError,
    iterated_rounding,
    iterated_rounding_v2,
)
from .leo import IncomeModel, LeoState, leo_residual, tatonnement
from .lp import LpError, NoAffordableOutcomes, build_lp, dump_lp, restrict_instance, solve_lp
from .model import InstanceError, dump_instance, load_instance
from .oracle import CertificateError, OracleExhausted, OracleParams, randomized_core_sampler, rho_core_sampler

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_INTERNAL = 0, 2, 3, 4

PRESETS = {
    "v2": {"variant": "v2", "alpha": 2.88, "rho": 4.88, "omega": 4.6},
    "v1": {"variant": "v1", "alpha": 6.57, "tau": 0.495, "omega": 5.11},
}


class ConfigError(ValueError):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, frozenset):
        return sorted(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _emit(report: dict, out: str | None):
    text = json.dumps(_jsonable(report), indent=2)
    if out and out != "-":
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _config(args) -> dict:
    skip = {"func", "timing", "output", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _load(path: str):
    try:
        return load_instance(path)
    except FileNotFoundError:
        raise ConfigError(f"instance file not found: {path}") from None


def _checks(rep: verify.VerifyReport, prefix: str = "") -> list:
    return [dict(c.to_dict(), name=prefix + c.name) for c in rep.checks]


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> dict:
    inst = _load(args.instance)
    preset = PRESETS[args.preset or args.variant or "v2"]
    variant = args.variant or preset["variant"]
    alpha = args.alpha if args.alpha is not None else preset["alpha"]
    omega = args.omega if args.omega is not None else preset["omega"]
    rng = np.random.default_rng(args.seed)
    if variant == "v2":
        rho = args.rho if args.rho is not None else preset.get("rho", 4.88)
        res = iterated_rounding_v2(inst, alpha, rho, omega, rng, slack=args.slack or 0.0, max_tries=args.max_tries)
    else:
        tau = args.tau if args.tau is not None else preset.get("tau", 0.5)
        params = OracleParams(alpha, tau, args.lambda_target or 0.0, max_tries=args.max_tries, augment=args.augment)
        res = iterated_rounding(inst, params, omega, rng, slack=0.02 if args.slack is None else args.slack)
    rep = verify.check_gamma_core(inst, res.outcome, res.nominal_ratio)
    results = res.to_dict()
    results["worst_gamma_needed"] = rep.worst_gamma_needed
    return {"results": [results], "checks": _checks(rep)}


def _sampler(inst, args):
    if args.rho is not None and args.rho > 1:
        return rho_core_sampler(inst, args.alpha, args.rho, args.tau)
    return randomized_core_sampler(inst, args.alpha, args.tau)


def cmd_lottery(args) -> dict:
    inst = _load(args.instance)
    sampler = _sampler(inst, args)
    draws = sampler.sample(args.trials, args.seed, workers=args.workers)
    bad_core, bad_cost = [], []
    sink = None
    if args.ndjson:
        sink = sys.stdout if args.ndjson == "-" else open(args.ndjson, "w")
    try:
        for t, d in enumerate(draws):
            if sink is not None:
                sink.write(json.dumps({"trial": t, **d.to_dict()}) + "\n")
            if d.realized_cost > inst.budget + 1e-9:
                bad_cost.append(t)
            if args.check_draws:
                r = verify.check_partial_core(inst, d.outcome, d.covered, d.certified_gamma, rho=d.certified_rho)
                if not r.passed:
                    bad_core.append(t)
    finally:
        if sink is not None and sink is not sys.stdout:
            sink.close()
    cov = verify.estimate_coverage(sampler, len(draws), args.seed, lam=sampler.lam, draws=draws)
    checks = [
        {"name": "budget", "passed": not bad_cost, **({"witness": {"trials": bad_cost[:10]}} if bad_cost else {})},
    ]
    if args.check_draws:
        checks.append({"name": "partial_core", "passed": not bad_core, **({"witness": {"trials": bad_core[:10]}} if bad_core else {})})
    checks += _checks(cov.to_report())
    results = {
        "sampler": sampler.describe(),
        "trials": len(draws),
        "coverage": {v: float(f) for v, f in zip(inst.voters, cov.frequencies)},
        "min_coverage": float(cov.frequencies.min()) if inst.n else 1.0,
        "halfwidth": cov.halfwidth,
        "mean_cost": float(np.mean([d.realized_cost for d in draws])),
    }
    return {"results": [results], "checks": checks}


def cmd_verify(args) -> dict:
    inst = _load(args.instance)
    checks, results = [], []
    did = False
    if args.outcome is not None:
        did = True
        try:
            doc = json.loads(args.outcome)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--outcome is not valid JSON: {e}") from None
        atoms = doc.get("atoms", []) if isinstance(doc, dict) else doc
        if args.gamma is None:
            raise ConfigError("--gamma is required with --outcome")
        if args.covered is not None:
            covered = [c for c in args.covered.split(",") if c]
            rep = verify.check_partial_core(inst, atoms, covered, args.gamma, rho=args.rho or 1.0)
        else:
            rep = verify.check_gamma_core(inst, atoms, args.gamma)
        checks += _checks(rep)
        results.append({"outcome": sorted(atoms), "worst_gamma_needed": rep.worst_gamma_needed})
    if args.lp_solution is not None:
        did = True
        if args.alpha is None:
            raise ConfigError("--alpha is required with --lp-solution")
        with open(args.lp_solution) as fh:
            sol = json.load(fh)
        comp = [frozenset(o) for o in sol["comparison_set"]] if "comparison_set" in sol else None
        rep = verify.check_lp_solution(inst, sol["y"], sol["p"], args.alpha, comp, sol.get("budget"), tol=args.tol)
        checks += _checks(rep, "lp.")
        results.append({"lp": rep.stats})
    if args.coverage:
        did = True
        if args.alpha is None or args.tau is None:
            raise ConfigError("--alpha and --tau are required with --coverage")
        sampler = _sampler(inst, args)
        cov = verify.estimate_coverage(sampler, args.trials, args.seed, draws=workers_draws(sampler, args))
        checks += _checks(cov.to_report())
        results.append({"min_coverage": float(cov.frequencies.min()), "lambda": sampler.lam, "halfwidth": cov.halfwidth})
    if args.brute_force:
        did = True
        g, o = verify.brute_force_min_gamma(inst)
        results.append({"min_gamma": g, "witness": sorted(o)})
    if not did:
        raise ConfigError("nothing to verify: give --outcome, --lp-solution, --coverage or --brute-force")
    return {"results": results, "checks": checks}


def workers_draws(sampler, args):
    return sampler.sample(args.trials, args.seed, workers=args.workers)


def _lp_model(inst, args):
    if args.restrict:
        comp, budget = restrict_instance(inst, args.alpha)
        return build_lp(inst, args.alpha, comp, budget)
    return build_lp(inst, args.alpha)


def cmd_lp(args) -> dict:
    inst = _load(args.instance)
    model = _lp_model(inst, args)
    if args.action == "dump":
        text = dump_lp(model)
        if args.lp_out:
            with open(args.lp_out, "w") as fh:
                fh.write(text)
        else:
            sys.stderr.write(text)
        return {"results": [{"variables": model.num_vars, "rows": model.num_rows}], "checks": []}
    sol = solve_lp(model, tol=args.tol, backend=args.backend)
    li = sol.instance
    rep = verify.check_lp_solution(li, sol.y, sol.p, sol.alpha, tol=10 * args.tol)
    res = {
        "alpha": sol.alpha,
        "budget": sol.budget,
        "comparison_set": [sorted(o) for o in li.comparison_set],
        "y": sol.y,
        "p": sol.p,
        "max_violation": sol.max_violation,
        "backend": sol.backend,
    }
    return {"results": [res], "checks": _checks(rep, "lp.")}


def _income(text: str) -> IncomeModel:
    if text == "uniform01":
        return IncomeModel.uniform()
    if text.startswith("uniform:"):
        lo, hi = (float(x) for x in text.split(":", 1)[1].split(","))
        return IncomeModel.interval(lo, hi)
    raise ConfigError(f"unknown income model {text!r} (use uniform01 or uniform:LO,HI)")


def cmd_leo(args) -> dict:
    inst = _load(args.instance)
    income = _income(args.income)
    state = None
    if args.from_lp:
        sol = solve_lp(build_lp(inst, args.alpha), tol=args.tol)
        from .leo import demand_matrix

        state = LeoState(demand_matrix(inst, sol.p, income), sol.y, sol.p)
    res = tatonnement(inst, income, args.alpha, state, damping=args.damping, max_iter=args.max_iter, tol=args.tol)
    hist = res.history[:: max(1, args.log_every)]
    final = leo_residual(inst, res.state, income, args.alpha)
    return {
        "results": [
            {
                "iterations": res.iterations,
                "converged": res.converged,
                "final": final,
                "history": hist,
                "y": res.state.y,
            }
        ],
        "checks": [],
    }


def _sizes(args) -> dict:
    out = {}
    for k in ("n", "m", "centers", "k", "delta", "max_cost", "budget", "dim"):
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def cmd_gen(args) -> dict:
    try:
        inst = apps.generate(args.kind, args.seed, **_sizes(args))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    doc = dump_instance(inst)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    return {
        "results": [{"kind": args.kind, "voters": inst.n, "atoms": len(inst.atoms), "comparison_set": len(inst.comparison_set), "path": args.out}],
        "checks": [],
    }


def _bench_one(job):
    path, variant, seed, alpha, tau, rho, omega = job
    inst = load_instance(path)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if variant == "v2":
        res = iterated_rounding_v2(inst, alpha, rho, omega, rng)
    else:
        res = iterated_rounding(inst, OracleParams(alpha, tau), omega, rng)
    dt = (time.perf_counter() - t0) * 1000.0
    rep = verify.check_gamma_core(inst, res.outcome, res.nominal_ratio)
    return {
        "instance": path,
        "seed": seed,
        "cost": res.cost,
        "worst_gamma_needed": rep.worst_gamma_needed,
        "nominal_ratio": res.nominal_ratio,
        "passed": rep.passed,
        "rounds": len(res.rounds),
        "runtime_ms": dt,
    }


def cmd_bench(args) -> dict:
    preset = PRESETS[args.preset or args.variant or "v2"]
    variant = args.variant or preset["variant"]
    alpha = args.alpha if args.alpha is not None else preset["alpha"]
    omega = args.omega if args.omega is not None else preset["omega"]
    tau = args.tau if args.tau is not None else preset.get("tau", 0.5)
    rho = args.rho if args.rho is not None else preset.get("rho", 4.88)
    jobs = [(p, variant, args.seed + s, alpha, tau, rho, omega) for p in args.instances for s in range(args.seeds)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            rows = list(ex.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    worst = max(r["worst_gamma_needed"] for r in rows) if rows else 0.0
    summary = {
        "runs": len(rows),
        "max_worst_gamma_needed": worst,
        "mean_worst_gamma_needed": float(np.mean([r["worst_gamma_needed"] for r in rows])) if rows else 0.0,
        "max_cost": max((r["cost"] for r in rows), default=0.0),
        "mean_runtime_ms": float(np.mean([r["runtime_ms"] for r in rows])) if rows else 0.0,
    }
    if not args.timing:
        for r in rows:
            r.pop("runtime_ms")
        summary.pop("mean_runtime_ms")
    failed = [f"{r['instance']}#{r['seed']}" for r in rows if not r["passed"]]
    checks = [{"name": "core", "passed": not failed, **({"witness": {"runs": failed}} if failed else {})}]
    return {"results": [summary] + rows, "checks": checks}


# ---------------------------------------------------------------------------
# parser


def _positive(x: str) -> float:
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _unit(x: str) -> float:
    v = float(x)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leocore", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
        sp.add_argument("--timing", action="store_true", help="include wall-clock timings in the report")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="deterministic approximate-core outcome by iterated rounding")
    s.add_argument("instance")
    s.add_argument("--variant", choices=["v1", "v2"])
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--alpha", type=_positive)
    s.add_argument("--tau", type=_unit)
    s.add_argument("--rho", type=_positive)
    s.add_argument("--omega", type=_positive)
    s.add_argument("--lambda-target", type=float)
    s.add_argument("--slack", type=float)
    s.add_argument("--max-tries", type=int, default=64)
    s.add_argument("--augment", action="store_true", help="v1: enlarge represented sets greedily")
    common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("lottery", help="sample realizations of the randomized-core lottery")
    s.add_argument("instance")
    s.add_argument("--alpha", type=_positive, required=True)
    s.add_argument("--tau", type=_unit, default=0.5)
    s.add_argument("--rho", type=_positive)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--ndjson", help="write one JSON line per realization to this path ('-' for stdout)")
    s.add_argument("--check-draws", action="store_true", help="recheck every draw's partial-core certificate")
    common(s)
    s.set_defaults(func=cmd_lottery)

    s = sub.add_parser("verify", help="check an outcome, LP point, or sampler")
    s.add_argument("instance")
    s.add_argument("--outcome", help='JSON like {"atoms": ["a", "b"]}')
    s.add_argument("--gamma", type=float)
    s.add_argument("--covered", help="comma-separated voter ids (partial-core check)")
    s.add_argument("--rho", type=_positive)
    s.add_argument("--lp-solution", help="JSON file with y, p (and optionally comparison_set, budget)")
    s.add_argument("--alpha", type=_positive)
    s.add_argument("--tau", type=_unit)
    s.add_argument("--coverage", action="store_true")
    s.add_argument("--trials", type=int, default=10000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--tol", type=float, default=1e-7)
    s.add_argument("--brute-force", action="store_true", help="report the smallest attainable core level")
    common(s)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("lp", help="dump or solve the equilibrium LP")
    s.add_argument("action", choices=["dump", "solve"])
    s.add_argument("instance")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--restrict", action="store_true", help="use the cost-restricted comparison set and budget")
    s.add_argument("--backend", choices=["highs", "simplex"], default="highs")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--lp-out", help="file for the LP text (default: stderr)")
    common(s, seed=False)
    s.set_defaults(func=cmd_lp)

    s = sub.add_parser("leo-iterate", help="damped price iteration with residual log")
    s.add_argument("instance")
    s.add_argument("--alpha", type=_positive, default=1.0)
    s.add_argument("--income", default="uniform01")
    s.add_argument("--damping", type=float, default=0.5)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--log-every", type=int, default=10)
    s.add_argument("--from-lp", action="store_true", help="start from the LP point")
    common(s, seed=False)
    s.set_defaults(func=cmd_leo)

    s = sub.add_parser("gen", help="generate a synthetic instance")
    s.add_argument("kind", choices=["pb", "clustering", "multilabel"])
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--centers", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--delta", type=int)
    s.add_argument("--max-cost", type=int)
    s.add_argument("--budget", type=float)
    s.add_argument("--dim", type=int)
    s.add_argument("--out", help="instance JSON path")
    common(s)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("bench", help="batch solve over seeds and aggregate core levels")
    s.add_argument("instances", nargs="+")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--variant", choices=["v1", "v2"])
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--alpha", type=_positive)
    s.add_argument("--tau", type=_unit)
    s.add_argument("--rho", type=_positive)
    s.add_argument("--omega", type=_positive)
    s.add_argument("--workers", type=int, default=1)
    common(s)
    s.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    t0 = time.perf_counter()
    try:
        body = args.func(args)
    except (ConfigError, InstanceError, PreconditionError, NoAffordableOutcomes, json.JSONDecodeError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except (OracleExhausted, IterationError) as e:
        _emit({"command": args.command, "config": _config(args), "results": [], "checks": [{"name": "oracle", "passed": False, "detail": str(e)}]}, args.output)
        return EXIT_CHECK
    except (LpError, CertificateError) as e:
        sys.stderr.write(f"internal error: {e}\n")
        return EXIT_INTERNAL
    report = {"command": args.command, "config": _config(args), "results": body["results"], "checks": body["checks"]}
    if args.timing:
        report["timing_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    _emit(report, args.output)
    return EXIT_OK if all(c["passed"] for c in body["checks"]) else EXIT_CHECK


def main() -> None:
    sys.exit(run())
