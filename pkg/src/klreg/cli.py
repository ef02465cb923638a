"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 failed scenario.
"""

from __future__ import annotations

import argparse
import copy
import math
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import index_calculus as ic
from .kl import kl_fit, kl_verify
from .lab import (
    APrioriRule,
    KLRule,
    PowerRule,
    check_bounds,
    fit_rates,
    records_to_csv,
    run_experiment,
    run_scenario,
    scenario_cheng_yamamoto,
    scenario_source_condition,
    summary_to_json,
)
from .model import DenseOperator, DiagonalOperator, NormWeights, polynomial_operator
from .penalty import penalty_from_spec
from .regularity import (
    RateSample,
    distance_function,
    j_rate,
    samples_to_csv,
    t_rate,
    variational_fit,
)
from .solver import TikhonovProblem, solve

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config

DEFAULTS = {
    "penalty": "quadratic",
    "operator": {"form": "polynomial", "n": 200, "s": 1.0},
    "source": {"mu": 0.25, "w_decay": 0.5},
    "weights": {},
    "alpha": {"min": 1e-8, "max": 1.0, "count": 40, "value": 1e-3},
    "noise": {"min": 1e-6, "max": 1e-2, "count": 20, "repetitions": 5, "seed": 0, "envelope": "pink"},
    "rule": {"kind": "a_priori"},
    "rates": {"r_min": 1e-2, "r_max": 1e2, "r_count": 20, "samples": 200},
    "output": {},
}

# allowed keys per table and their accepted types
SCHEMA = {
    "penalty": str,
    "operator": {
        "form": str,
        "n": int,
        "s": (int, float),
        "singular_values": list,
        "matrix": list,
        "matrix_file": str,
    },
    "source": {"mu": (int, float), "w_decay": (int, float), "x_true": list},
    "weights": {"b": (int, float)},
    "alpha": {"min": (int, float), "max": (int, float), "count": int, "value": (int, float), "grid": list},
    "noise": {
        "min": (int, float),
        "max": (int, float),
        "count": int,
        "deltas": list,
        "repetitions": int,
        "seed": int,
        "envelope": str,
    },
    "rule": {"kind": str, "c": (int, float), "p": (int, float), "e": (int, float)},
    "rates": {"r_min": (int, float), "r_max": (int, float), "r_count": int, "samples": int},
    "output": {"csv": str, "json": str},
}


def _validate(cfg: dict, schema: dict, path: str = ""):
    for key, val in cfg.items():
        where = f"{path}{key}"
        if key not in schema:
            raise UsageError(f"config: unknown key '{where}'")
        expect = schema[key]
        if isinstance(expect, dict):
            if not isinstance(val, dict):
                raise UsageError(f"config: '{where}' must be a table")
            _validate(val, expect, where + ".")
        elif isinstance(val, bool) or not isinstance(val, expect):
            raise UsageError(f"config: '{where}' has the wrong type ({type(val).__name__})")


def load_config(path: str | None) -> dict:
    """Read a TOML config, reject unknown keys and fill defaults."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"config: cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config: {path}: {exc}") from None
    _validate(raw, SCHEMA)
    for key, val in raw.items():
        if isinstance(val, dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg


def build_problem(cfg: dict) -> TikhonovProblem:
    op = cfg["operator"]
    form = op["form"]
    try:
        if form == "polynomial":
            A = polynomial_operator(op["n"], op["s"])
        elif form == "diagonal":
            A = DiagonalOperator(op["singular_values"])
        elif form == "dense":
            if "matrix" in op:
                A = DenseOperator(op["matrix"])
            elif "matrix_file" in op:
                A = DenseOperator(np.loadtxt(op["matrix_file"], delimiter=",", ndmin=2))
            else:
                raise UsageError("config: dense operator needs 'operator.matrix' or 'operator.matrix_file'")
        else:
            raise UsageError(f"config: unknown operator form '{form}' at 'operator.form'")
        J = penalty_from_spec(cfg["penalty"])
        src = cfg["source"]
        if "x_true" in src:
            xt = np.asarray(src["x_true"], dtype=float)
        else:
            m = A.shape[1]
            k = np.arange(1, m + 1, dtype=float)
            w = np.where(k % 2 == 1, 1.0, -1.0) * k ** -float(src["w_decay"])
            xt = A.power_AstarA(float(src["mu"]), w / np.linalg.norm(w))
        weights = NormWeights(float(cfg["weights"]["b"])) if "b" in cfg["weights"] else None
        return TikhonovProblem.from_solution(A, J, xt, weights)
    except (ValueError, OSError) as exc:
        raise UsageError(f"config: {exc}") from None


def alpha_grid(cfg: dict) -> np.ndarray:
    a = cfg["alpha"]
    if "grid" in a:
        return np.asarray(a["grid"], dtype=float)
    return np.logspace(math.log10(a["min"]), math.log10(a["max"]), a["count"])


def delta_grid(cfg: dict) -> np.ndarray:
    nz = cfg["noise"]
    if "deltas" in nz:
        return np.asarray(nz["deltas"], dtype=float)
    return np.logspace(math.log10(nz["min"]), math.log10(nz["max"]), nz["count"])


def build_rule(cfg: dict, prob: TikhonovProblem):
    r = cfg["rule"]
    kind = r["kind"]
    if kind == "a_priori":
        mu = float(cfg["source"]["mu"])
        psi2 = ic.IndexFunction.power(r.get("c", 0.5), r.get("p", 2.0 * mu))
        return APrioriRule(psi2), psi2
    if kind == "kl":
        mu = float(cfg["source"]["mu"])
        phi = ic.IndexFunction.power(r.get("c", 1.0), r.get("p", 2.0 * mu / (2.0 * mu + 1.0)))
        psi2 = ic.psi_from_kl(ic.KLDescription(phi, 1.0, 1.0))
        return KLRule(phi), psi2
    if kind == "power":
        mu = float(cfg["source"]["mu"])
        return PowerRule(r.get("c", 1.0), r.get("e", 1.0)), ic.IndexFunction.power(0.5, 2.0 * mu)
    raise UsageError(f"config: unknown rule '{kind}' at 'rule.kind'")


# ---------------------------------------------------------------------------
# output helpers


def _dumps(obj) -> str:
    return summary_to_json(obj)


def _emit(text: str, path: str | None, out):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args, cfg, out):
    if args.sigma is not None:
        if args.y is None or len(args.y) != len(args.sigma):
            raise UsageError("solve: --y must give one value per --sigma entry")
        try:
            A = DiagonalOperator(args.sigma)
            J = penalty_from_spec(args.penalty or cfg["penalty"])
        except ValueError as exc:
            raise UsageError(f"solve: {exc}") from None
        prob = TikhonovProblem(A, J, np.asarray(args.y, dtype=float))
    else:
        prob = build_problem(cfg)
    alpha = args.alpha if args.alpha is not None else cfg["alpha"]["value"]
    if not alpha > 0:
        raise UsageError("solve: alpha must be positive")
    sol = solve(prob, alpha)
    _emit(_dumps(sol.to_dict()), args.json or cfg["output"].get("json"), out)
    return EXIT_OK


def cmd_rates(args, cfg, out):
    prob = build_problem(cfg)
    grid = alpha_grid(cfg)
    samples: list[RateSample] = []
    if args.kind in ("j", "all"):
        samples += j_rate(prob, grid)
    if args.kind in ("t", "all"):
        samples += t_rate(prob, grid)
    summary = {"config": cfg}
    rc = cfg["rates"]
    if args.kind in ("distance", "all"):
        rs = np.logspace(math.log10(rc["r_min"]), math.log10(rc["r_max"]), rc["r_count"])
        bounds = [distance_function(prob, float(r)) for r in rs]
        samples += [RateSample(b.r, b.lower, "distance_lower") for b in bounds]
        samples += [RateSample(b.r, b.upper, "distance_upper") for b in bounds]
    if args.kind in ("variational", "all"):
        fit = variational_fit(prob, rc["samples"], cfg["noise"]["seed"], grid)
        summary["variational_fit"] = fit.to_dict()
    _emit(samples_to_csv(samples), args.csv or cfg["output"].get("csv"), out)
    if args.json or cfg["output"].get("json"):
        _emit(_dumps(summary), args.json or cfg["output"].get("json"), out)
    return EXIT_OK


TRANSFORMS = {
    "psi2_from_phi3": ic.psi2_from_phi3,
    "phi3_from_psi2": ic.phi3_from_psi2,
    "phi4_from_phi3": ic.phi4_from_phi3,
    "phi3_from_phi4": ic.phi3_from_phi4,
    "companion": ic.companion,
}


def cmd_transforms(args, cfg, out):
    try:
        f = ic.IndexFunction.power(args.c, args.p)
        name = args.name
        if name in TRANSFORMS:
            g = TRANSFORMS[name](f)
            result = {"transform": name, "c": g.coefficient, "p": g.exponent}
        elif name == "psi_from_kl":
            g = ic.psi_from_kl(ic.KLDescription(f, args.k, args.g))
            result = {"transform": name, "c": g.coefficient, "p": g.exponent}
        elif name == "kl_from_psi":
            d = ic.kl_from_psi(f, args.g)
            result = {"transform": name, "c": d.phi.coefficient, "p": d.phi.exponent, "k": d.k}
        elif name == "a_priori_alpha":
            result = {"transform": name, "delta": args.delta, "alpha": ic.a_priori_alpha(f, args.delta)}
        else:
            choice = ic.kl_alpha_choice(f, args.delta)
            result = {"transform": name, "delta": args.delta, **choice._asdict()}
    except ValueError as exc:
        raise UsageError(f"transforms: {exc}") from None
    _emit(_dumps(result), args.json, out)
    return EXIT_OK


def cmd_kl(args, cfg, out):
    prob = build_problem(cfg)
    grid = alpha_grid(cfg)
    fit = kl_fit(prob, grid)
    ver = kl_verify(prob, fit.phi, grid)
    result = {
        "config": cfg,
        "kl_fit": fit.to_dict(),
        "kl_verify": {"holds": ver.holds, "k": ver.k, "spread": ver.spread, "trend": ver.trend},
    }
    if args.csv or cfg["output"].get("csv"):
        _emit(fit.samples_csv(), args.csv or cfg["output"].get("csv"), out)
    _emit(_dumps(result), args.json or cfg["output"].get("json"), out)
    return EXIT_OK


def cmd_experiment(args, cfg, out):
    prob = build_problem(cfg)
    rule, psi2 = build_rule(cfg, prob)
    nz = cfg["noise"]
    try:
        records = run_experiment(prob, delta_grid(cfg), rule, nz["repetitions"], nz["seed"], nz["envelope"], args.workers)
    except ValueError as exc:
        raise UsageError(f"experiment: {exc}") from None
    bounds = check_bounds(records, psi2)
    rates = fit_rates(records)
    summary = {
        "config": cfg,
        "rule": rule.to_dict(),
        "fitted_exponents": {k: v.exponent for k, v in rates.items()},
        "fits": {k: v.to_dict() for k, v in rates.items()},
        "bounds": bounds.to_dict(),
    }
    _emit(records_to_csv(records), args.csv or cfg["output"].get("csv"), out)
    _emit(_dumps(summary), args.json or cfg["output"].get("json"), out)
    return EXIT_OK


def cmd_scenario(args, cfg, out):
    try:
        if args.name == "source-condition":
            kw = {}
            if args.n is not None:
                kw["n"] = args.n
            if args.envelope is not None:
                kw["envelope"] = args.envelope
            sc = scenario_source_condition(args.mu, s=args.s, w_decay=args.w_decay, repetitions=args.reps, **kw)
        else:
            kw = {}
            if args.n is not None:
                kw["n"] = args.n
            if args.envelope is not None:
                kw["envelope"] = args.envelope
            sc = scenario_cheng_yamamoto(s=args.s, b=args.b, repetitions=args.reps, **kw)
    except ValueError as exc:
        raise UsageError(f"scenario: {exc}") from None
    seed = args.seed if args.seed is not None else 0
    summary, records = run_scenario(sc, seed=seed, workers=args.workers)
    summary["config"] = {k: v for k, v in vars(args).items() if k not in ("func", "json", "csv")}
    if args.csv:
        _emit(records_to_csv(records), args.csv, out)
    _emit(_dumps(summary), args.json, out)
    return EXIT_OK if summary["pass"] else EXIT_FAILED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="klreg", description="Tikhonov regularization rate laboratory")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="noise seed (overrides the config)")
    common.add_argument("--json", help="write the JSON result here instead of stdout")
    common.add_argument("--csv", help="write CSV output here")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="one Tikhonov solve")
    s.add_argument("--alpha", type=float)
    s.add_argument("--sigma", type=float, nargs="+", help="diagonal singular values")
    s.add_argument("--y", type=float, nargs="+", help="data vector")
    s.add_argument("--penalty")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("rates", parents=[common], help="J-rate, T-rate, distance function and variational fit")
    s.add_argument("--kind", choices=["j", "t", "distance", "variational", "all"], default="all")
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("transforms", parents=[common], help="index-function transform of c * t**p")
    s.add_argument("name", choices=sorted([*TRANSFORMS, "psi_from_kl", "kl_from_psi", "a_priori_alpha", "kl_alpha_choice"]))
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--k", type=float, default=1.0, help="KL constant")
    s.add_argument("--g", type=float, default=1.0, help="subgradient norm at the exact solution")
    s.add_argument("--delta", type=float, default=1e-2)
    s.set_defaults(func=cmd_transforms)

    s = sub.add_parser("kl", parents=[common], help="KL fit and verification on the noise-free path")
    s.set_defaults(func=cmd_kl)

    s = sub.add_parser("experiment", parents=[common], help="noisy experiment with rate bounds")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("scenario", parents=[common], help="packaged scenarios with pass/fail")
    s.add_argument("name", choices=["source-condition", "cheng-yamamoto"])
    s.add_argument("--mu", type=float, default=0.25)
    s.add_argument("--s", type=float, default=1.0)
    s.add_argument("--b", type=float, default=0.5)
    s.add_argument("--n", type=int)
    s.add_argument("--w-decay", type=float, dest="w_decay")
    s.add_argument("--envelope", choices=["white", "pink"])
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["noise"]["seed"] = args.seed
        return args.func(args, cfg, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
