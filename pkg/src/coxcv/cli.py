"""Command-line entry point: ``coxcv {fit, cv, simulate, folds}``.

Exit codes: 0 success, 2 usage, 3 input/data error, 4 undefined
cross-validation selection, 5 convergence failure. Failures print one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .core import SurvivalDataset
from .cv import METHOD_ALIASES, CvConfig, assign_folds, canonical_method, evaluate_all, fit_cv_paths, make_folds, select_index
from .errors import ConvergenceError, DatasetError, UndefinedCVError
from .fileio import (
    RunManifest,
    load_scenario_config,
    parse_dataset_csv,
    parse_penalty_factors,
    parse_status_file,
    sha256_file,
    write_curves_csv,
    write_folds_csv,
    write_json,
    write_path_csv,
    write_scenario,
)
from .simulation import run_scenario
from .solver import PenaltyConfig, fit_path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_UNDEFINED = 4
EXIT_CONVERGENCE = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_penalty_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=1.0, help="elastic-net mixing, 1 is the lasso")
    p.add_argument("--penalty-factors", type=Path, help="CSV with columns covariate,factor")
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coxcv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"coxcv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit a penalized Cox solution path")
    fit.add_argument("--input", type=Path, required=True)
    _add_penalty_args(fit)
    fit.add_argument("--out", type=Path, default=Path("."))
    fit.add_argument("--threads", type=int, default=1)

    cv = sub.add_parser("cv", help="cross-validate the penalty level")
    cv.add_argument("--input", type=Path, required=True)
    cv.add_argument("--method", nargs="+", default=["lp"], choices=sorted(METHOD_ALIASES))
    cv.add_argument("--folds", type=int, default=10, help="number of folds K; K=n is leave-one-out")
    cv.add_argument("--balance-folds", action="store_true", help="stratify folds by event status")
    cv.add_argument("--seed", type=int, default=0)
    _add_penalty_args(cv)
    cv.add_argument("--out", type=Path, default=Path("."))
    cv.add_argument("--threads", type=int, default=1)

    sim = sub.add_parser("simulate", help="run a simulation scenario")
    sim.add_argument("--config", type=Path, required=True, help="YAML or JSON scenario")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--replications", type=int, help="override the replication count")
    sim.add_argument("--out", type=Path, default=Path("."))
    sim.add_argument("--threads", type=int, default=1)

    folds = sub.add_parser("folds", help="write a fold assignment")
    folds.add_argument("--n", type=int, required=True)
    folds.add_argument("--folds", type=int, required=True)
    folds.add_argument("--seed", type=int, default=0)
    folds.add_argument("--balance", action="store_true")
    folds.add_argument("--status-file", type=Path)
    folds.add_argument("--out", type=Path, default=Path("."))
    return parser


def _penalty_config(args, data: SurvivalDataset) -> PenaltyConfig:
    factors = None
    if args.penalty_factors is not None:
        factors = tuple(parse_penalty_factors(args.penalty_factors, data.names))
    try:
        return PenaltyConfig(alpha=args.alpha, penalty_factors=factors, n_lambda=args.n_lambda,
                             lambda_min_ratio=args.lambda_min_ratio)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _digests(args) -> dict:
    out = {"input": sha256_file(args.input)}
    if getattr(args, "penalty_factors", None) is not None:
        out["penalty_factors"] = sha256_file(args.penalty_factors)
    return out


def _echo(args, *keys) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k in keys if (v := getattr(args, k)) is not None}


def _check_threads(args) -> None:
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be at least 1")


def cmd_fit(args) -> int:
    data = parse_dataset_csv(args.input)
    config = _penalty_config(args, data)
    path = fit_path(data, config)
    args.out.mkdir(parents=True, exist_ok=True)
    write_path_csv(path, data.names, args.out / "path.csv")
    RunManifest(
        "fit", _echo(args, "input", "alpha", "penalty_factors", "n_lambda", "lambda_min_ratio"),
        None, input_sha256=_digests(args),
    ).write(args.out / "manifest.json")
    return EXIT_OK


def cmd_cv(args) -> int:
    data = parse_dataset_csv(args.input)
    config = _penalty_config(args, data)
    methods = list(dict.fromkeys(canonical_method(m) for m in args.method))
    strategy = "event_balanced" if args.balance_folds else "random"
    try:
        cv_config = CvConfig(K=args.folds, strategy=strategy, method=methods[0], seed=args.seed)
        folds = make_folds(data, cv_config)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    fits = fit_cv_paths(data, config, folds, threads=args.threads)
    curves = evaluate_all(data, fits, methods)

    summary, failures = {}, []
    for method, curve in curves.items():
        try:
            idx = select_index(curve)
        except UndefinedCVError as exc:
            failures.append(exc)
            summary[method] = {"selected_lambda": None, "n_nonzero": None, "error": str(exc)}
            continue
        summary[method] = {
            "selected_index": idx,
            "selected_lambda": float(curve.lambdas[idx]),
            "n_nonzero": int(curve.n_nonzero[idx]),
            "cve": float(curve.cve[idx]),
            "cve_rescaled": curve.rescaled().tolist(),
        }
    args.out.mkdir(parents=True, exist_ok=True)
    write_curves_csv(list(curves.values()), args.out / "cv_curve.csv")
    write_json({
        "methods": summary,
        "K": folds.K,
        "fold_strategy": strategy,
        "fold_sizes": folds.sizes(),
        "fold_event_counts": folds.event_counts(data.status),
        "lambda_max": fits.full_path.lambda_max,
        "n": data.n,
        "p": data.p,
    }, args.out / "cv_summary.json")
    RunManifest(
        "cv", _echo(args, "input", "method", "folds", "balance_folds", "alpha", "penalty_factors",
                    "n_lambda", "lambda_min_ratio"),
        args.seed, input_sha256=_digests(args),
    ).write(args.out / "manifest.json")
    if failures:
        raise failures[0]
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_scenario_config(args.config)
    overrides = {k: v for k, v in (("seed", args.seed), ("replications", args.replications)) if v is not None}
    if overrides:
        config = type(config).from_dict({**config.to_dict(), **overrides})
    result = run_scenario(config, threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    write_scenario(result, args.out)
    RunManifest("simulate", config.to_dict(), config.seed,
                input_sha256={"config": sha256_file(args.config)}).write(args.out / "manifest.json")
    return EXIT_OK


def cmd_folds(args) -> int:
    status = None
    if args.balance:
        if args.status_file is None:
            raise UsageError("--balance needs --status-file")
        status = parse_status_file(args.status_file)
        if status.size != args.n:
            raise DatasetError(f"status file has {status.size} rows, --n is {args.n}")
    try:
        folds = assign_folds(args.n, args.folds, args.seed, "event_balanced" if args.balance else "random", status)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    args.out.mkdir(parents=True, exist_ok=True)
    write_folds_csv(folds, args.out / "folds.csv")
    digests = {"status_file": sha256_file(args.status_file)} if args.status_file else None
    RunManifest("folds", _echo(args, "n", "folds", "balance", "status_file"), args.seed,
                input_sha256=digests).write(args.out / "manifest.json")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "simulate": cmd_simulate, "folds": cmd_folds}


def _fail(code: int, kind: str, exc: BaseException, **extra) -> int:
    payload = {"error": kind, "message": str(exc), "exit_code": code}
    payload.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_threads(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except UndefinedCVError as exc:
        return _fail(EXIT_UNDEFINED, "undefined_cv", exc,
                     fold_event_counts=exc.fold_event_counts, fold_sizes=exc.fold_sizes)
    except DatasetError as exc:
        return _fail(EXIT_DATA, "data", exc, row=exc.row, column=exc.column)
    except OSError as exc:
        return _fail(EXIT_DATA, "io", exc)
    except ConvergenceError as exc:
        return _fail(EXIT_CONVERGENCE, "convergence", exc)
    except ValueError as exc:
        return _fail(EXIT_DATA, "data", exc)


def main() -> None:
    sys.exit(run_cli())
