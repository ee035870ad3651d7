"""Command-line front end: ``fit``, ``bayes`` and ``simulate``.

Every command writes its result together with the package version, the
seed and an echo of the parsed options.  Errors in the input produce a JSON
object ``{"error": ...}`` on stderr and exit status 1; a fit that does not
converge is still written but exits with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bayes import HmcConfig, Model, Prior, bayesian_pearson, hmc_sample, summarize
from .data import DataError, UnderdeterminedError, load_csv
from .estimation import fit_cantoni, fit_gamma_mle, fit_robust_mle, pearson_residuals
from .simstudy import DEFAULT_C_GRID, ScenarioError, ScenarioSpec, moving_outlier_sweep, run_study

logger = logging.getLogger(__name__)

EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2

ACCEPT_RANGE = (0.2, 0.95)


class CliError(Exception):
    """Input problem reported as JSON with exit status 1."""


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _provenance(args: argparse.Namespace) -> dict:
    echo = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"version": __version__, "seed": args.seed, "config": _jsonable(echo)}


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _dump(obj) -> str:
    # floats are written with repr, the shortest string that reads back exactly
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False)


def _load(args: argparse.Namespace, for_bayes: bool = False):
    if not args.data:
        raise CliError("--data is required")
    if not args.response:
        raise CliError("--response is required")
    try:
        return load_csv(args.data, args.response, intercept=not args.no_intercept)
    except UnderdeterminedError as exc:
        if for_bayes:
            raise CliError(
                "refusing to sample: with a flat prior on the coefficients the posterior is only "
                f"guaranteed to be proper when n >= p ({exc})"
            ) from exc
        raise CliError(str(exc)) from exc
    except DataError as exc:
        raise CliError(str(exc)) from exc


# --------------------------------------------------------------------------
# commands


def cmd_fit(args: argparse.Namespace) -> int:
    data = _load(args)
    if args.model == "gamma":
        fit = fit_gamma_mle(data)
    elif args.model == "robust":
        fit = fit_robust_mle(data, c=args.c if args.c is not None else 1.6)
    else:
        fit = fit_cantoni(data, c=args.c if args.c is not None else 1.345)
    out = _provenance(args)
    out.update(
        {
            "command": "fit",
            "model": args.model,
            "columns": list(data.column_names or []),
            "beta": fit.beta,
            "nu": fit.nu,
            "loglik": fit.log_likelihood,
            "pearson_residuals": pearson_residuals(data, fit.beta, fit.nu),
            "result": fit.to_dict(),
        }
    )
    _emit(_dump(out), args.output)
    if not fit.ok:
        logger.error("fit did not converge: %s", fit.message or "gradient above tolerance")
        return EXIT_NOT_CONVERGED
    return 0


def cmd_bayes(args: argparse.Namespace) -> int:
    if args.model == "cantoni":
        raise CliError("bayes supports --model gamma or robust")
    data = _load(args, for_bayes=True)
    prior = Prior(alpha=args.prior_alpha, theta=args.prior_theta)
    config = HmcConfig(
        step_size=args.step_size,
        leapfrog_steps=args.leapfrog,
        iterations=args.iterations,
        burn_in_fraction=args.burn_in,
        seed=args.seed,
        adapt=not args.no_adapt,
        adapt_iterations=args.adapt_iterations,
    )
    c = args.c if args.c is not None else 1.6
    chain = hmc_sample(data, prior, Model(args.model), c=c, config=config)
    names = list(data.column_names or [f"beta{j + 1}" for j in range(data.p)])
    warnings = []
    lo, hi = ACCEPT_RANGE
    if not lo <= chain.accept_rate <= hi:
        msg = f"acceptance rate {chain.accept_rate:.3f} outside [{lo}, {hi}]; consider retuning --step-size/--leapfrog"
        logger.warning(msg)
        warnings.append(msg)
    out = _provenance(args)
    out.update(
        {
            "command": "bayes",
            "model": args.model,
            "summary": summarize(chain, names),
            "accept_rate": chain.accept_rate,
            "divergences": chain.divergences,
            "step_size": chain.step_size,
            "draws_kept": int(chain.draws.shape[0]),
            "warnings": warnings,
        }
    )
    if args.model == "robust":
        resid, fitted = bayesian_pearson(data, chain)
        out["residuals"] = [
            {"index": i, "fitted_mean": float(m), "pearson_residual": float(r)} for i, (m, r) in enumerate(zip(fitted, resid))
        ]
    if args.chain_csv:
        chain.to_csv(args.chain_csv, names)
    _emit(_dump(out), args.output)
    return 0


def _parse_list(text: str, kind, what: str):
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"cannot parse {what}: {text!r}") from None


def cmd_simulate(args: argparse.Namespace) -> int:
    fmt = args.format or "csv"
    if args.sweep:
        c = args.c if args.c is not None else 1.6
        table = moving_outlier_sweep(c=c, seed=args.seed)
        meta = _provenance(args)
        if fmt == "json":
            meta.update({"command": "simulate", "sweep": table.to_dict(orient="records")})
            _emit(_dump(meta), args.output)
        else:
            _emit(_csv_with_header(table.to_csv(index=False, float_format="%.17g"), meta), args.output)
        return 0

    scenarios = _parse_list(args.scenario or "S1,S2,S3,S4", str, "--scenario")
    sizes = _parse_list(args.n or "20,40", int, "--n")
    c_grid = (args.c,) if args.c is not None else DEFAULT_C_GRID
    try:
        specs = [
            ScenarioSpec.standard(
                s.strip().upper(),
                n,
                replicates=args.replicates,
                seed=args.seed,
                c_grid=c_grid,
                shift_before_leverage=args.leverage_order == "shift-first",
            )
            for s in scenarios
            for n in sizes
        ]
    except ScenarioError as exc:
        raise CliError(str(exc)) from exc
    if args.replicates < 100:
        raise CliError(f"need at least 100 replicates, got {args.replicates}")
    report = run_study(specs, workers=max(1, args.threads))
    meta = _provenance(args)
    if fmt == "json":
        meta.update({"command": "simulate", "report": report.to_dict()})
        _emit(_dump(meta), args.output)
    else:
        _emit(_csv_with_header(report.to_csv(), meta), args.output)
    return 0


def _csv_with_header(body: str, meta: dict) -> str:
    """Prefix provenance as ``#`` comment lines (``pandas.read_csv(comment="#")`` skips them)."""
    lines = [f"# version: {meta['version']}", f"# seed: {meta['seed']}", f"# config: {json.dumps(meta['config'])}"]
    return "\n".join(lines) + "\n" + body


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustgamma", description="Robust gamma regression tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (recorded in the output)")
    common.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=["json", "csv"], default=None)
    common.add_argument("--c", type=float, default=None, help="tuning constant")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--verbose", "-v", action="store_true")

    data_opts = argparse.ArgumentParser(add_help=False)
    data_opts.add_argument("--data", help="CSV file with a header row")
    data_opts.add_argument("--response", help="name of the response column")
    data_opts.add_argument("--no-intercept", action="store_true", help="do not prepend an intercept column")

    fit = sub.add_parser("fit", parents=[common, data_opts], help="point estimation")
    fit.add_argument("--model", choices=["gamma", "robust", "cantoni"], default="robust")
    fit.set_defaults(func=cmd_fit)

    bayes = sub.add_parser("bayes", parents=[common, data_opts], help="posterior sampling with HMC")
    bayes.add_argument("--model", choices=["gamma", "robust", "cantoni"], default="robust")
    bayes.add_argument("--prior-alpha", type=float, default=2.0, help="gamma prior shape for nu")
    bayes.add_argument("--prior-theta", type=float, default=50.0, help="gamma prior scale for nu")
    bayes.add_argument("--iterations", type=int, default=100_000)
    bayes.add_argument("--burn-in", type=float, default=0.10, help="fraction of iterations discarded")
    bayes.add_argument("--step-size", type=float, default=0.01)
    bayes.add_argument("--leapfrog", type=int, default=20)
    bayes.add_argument("--adapt-iterations", type=int, default=5_000, help="pilot iterations for the mass matrix")
    bayes.add_argument("--no-adapt", action="store_true", help="use --step-size and unit mass as given")
    bayes.add_argument("--chain-csv", default=None, help="also write the kept draws to this CSV")
    bayes.set_defaults(func=cmd_bayes)

    sim = sub.add_parser("simulate", parents=[common], help="simulation study or moving-outlier sweep")
    sim.add_argument("--scenario", default=None, help="comma-separated subset of S0..S4 (default S1..S4)")
    sim.add_argument("--n", default=None, help="comma-separated sample sizes from {20, 40} (default both)")
    sim.add_argument("--replicates", type=int, default=1000)
    sim.add_argument("--sweep", action="store_true", help="moving-outlier table instead of the study")
    sim.add_argument(
        "--leverage-order",
        choices=["shift-first", "leverage-first"],
        default="shift-first",
        help="in S3/S4, shift the response at the original or at the new covariate value",
    )
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "fit" and args.format == "csv":
            raise CliError("fit writes JSON only")
        return args.func(args)
    except (CliError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": str(exc)}) + "\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
