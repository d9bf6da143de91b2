"""Command-line entry point.

JSON results go to stdout, diagnostics to stderr.  Exit status is 0 on
success, 2 for configuration errors and 1 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .contracts import KINDS, STYLES, ContractSpec
from .errors import ParameterError, StabilityError
from .lattice import TreeConfig, black_scholes, crr_price, geo_asian_closed_form, geo_avg_tree
from .pricer import price_american, price_averaged, price_european, reprice_independent, result_record
from .process import ProcessParams, TimeGrid, simulate
from .study import StudyConfig, objective_sweep, run_error_study

OUT_ENV = "MCAMERICAN_OUT"
MODES = ("3a", "3b", "exact", "grid")


def _contract_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--contract", help="contract JSON file; flags override its fields")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--strike", type=float)
    p.add_argument("--expiry", type=float)
    p.add_argument("--style", choices=STYLES)
    p.add_argument("--n-steps", "--steps", dest="n_steps", type=int)
    p.add_argument("--params", help="process JSON file; flags override its fields")
    p.add_argument("--r", "--rate", dest="r", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--s0", type=float)


def _mc_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seed2", type=int, help="independent sample seed (default seed + 1)")
    p.add_argument("--mode", choices=MODES, default="grid")
    p.add_argument("--flashlight", action="store_true")
    p.add_argument("--no-cutoff", action="store_true")
    p.add_argument("--importance", action="store_true")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--binning", choices=("population", "width"), default="population")
    p.add_argument("--threads", type=int, default=1)


def _out_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or ./mcamerican-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcamerican", description="Monte Carlo American option pricing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="price one contract")
    _contract_args(p)
    _mc_args(p)
    _out_arg(p)

    p = sub.add_parser("oracle", help="tree and closed-form reference prices")
    _contract_args(p)
    p.add_argument("--tree-steps", type=int, help="tree steps (default: contract n_steps)")

    p = sub.add_parser("boundary", help="track the boundary and export it as CSV")
    _contract_args(p)
    _mc_args(p)
    _out_arg(p)

    p = sub.add_parser("study", help="random-option error study")
    p.add_argument("--config", required=True, help="StudyConfig JSON file")
    _out_arg(p)

    p = sub.add_parser("sweep", help="objective curves on the demo put")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ns", type=int, nargs="+", default=[100, 1_000, 10_000, 100_000])
    _out_arg(p)
    return parser


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParameterError(f"{path} must hold a JSON object")
    return data


def _overlay(base: dict, args: argparse.Namespace, names) -> dict:
    out = dict(base)
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            out[name] = val
    return out


def contract_from_args(args) -> ContractSpec:
    data = _overlay(_load_json(args.contract), args, ("kind", "strike", "expiry", "style", "n_steps"))
    return ContractSpec.from_dict(data)


def params_from_args(args) -> ProcessParams:
    return ProcessParams.from_dict(_overlay(_load_json(args.params), args, ("r", "sigma", "s0")))


def out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_ENV) or "mcamerican-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _flags(args) -> dict:
    return {"mode": args.mode, "cutoff": not args.no_cutoff, "flashlight": args.flashlight,
            "importance": args.importance, "bins": args.bins, "binning": args.binning}


def _track(args, contract, params):
    return price_american(params, contract, args.paths, args.seed, mode=args.mode, cutoff=not args.no_cutoff,
                          flashlight=args.flashlight, importance=args.importance, n_bins=args.bins,
                          binning=args.binning, threads=args.threads)


def cmd_price(args) -> dict:
    contract, params = contract_from_args(args), params_from_args(args)
    seed2 = args.seed + 1 if args.seed2 is None else args.seed2
    seeds = {"seed": args.seed, "seed2": seed2}
    if contract.style == "european":
        sample = simulate(params, TimeGrid.for_contract(contract), args.paths, args.seed, contract,
                          args.importance, args.threads)
        est = price_european(sample, contract)
        return result_record(contract, params, seeds, _flags(args), {"european": est})
    up, boundary = _track(args, contract, params)
    down = reprice_independent(params, contract, boundary, args.paths, seed2, args.importance, args.threads)
    path = out_dir(args) / f"boundary_{contract.kind}_seed{args.seed}.csv"
    boundary.to_csv(path)
    ests = {"in_sample": up, "independent": down, "averaged": price_averaged(up, down)}
    return result_record(contract, params, seeds, _flags(args), ests, str(path))


def cmd_oracle(args) -> dict:
    contract, params = contract_from_args(args), params_from_args(args)
    n = args.tree_steps or contract.n_steps
    out = {"contract": contract.to_dict(), "params": params.to_dict(), "tree_steps": n}
    if contract.kind == "arith-avg-put":
        raise ParameterError("kind: no oracle exists for arithmetic averages")
    if contract.kind == "geo-avg-put":
        out["tree"] = geo_avg_tree(TreeConfig(n, params, contract))
        if contract.style == "european":
            out["closed_form"] = geo_asian_closed_form(contract, params)
    else:
        out["tree"] = crr_price(TreeConfig(n, params, contract))[0]
        if contract.style == "european":
            out["closed_form"] = black_scholes(contract, params)
    return out


def cmd_boundary(args) -> dict:
    contract, params = contract_from_args(args), params_from_args(args)
    if contract.style != "american":
        raise ParameterError("style: boundaries exist for american contracts only")
    est, boundary = _track(args, contract, params)
    path = out_dir(args) / f"boundary_{contract.kind}_seed{args.seed}.csv"
    boundary.to_csv(path)
    return {"boundary_file": str(path), "rows": boundary.n_steps + 1, "in_sample": est.to_dict()}


def cmd_study(args) -> dict:
    config = StudyConfig.from_dict(_load_json(args.config))
    target = out_dir(args)

    def progress(rec):
        print(f"option {rec.index}: {rec.status} {rec.message}".rstrip(), file=sys.stderr)

    result = run_error_study(config, target, progress)
    return {"out_dir": str(target), "summary": result.summary()}


def cmd_sweep(args) -> dict:
    return objective_sweep(out_dir(args), args.ns, args.seed)


COMMANDS = {"price": cmd_price, "oracle": cmd_oracle, "boundary": cmd_boundary, "study": cmd_study,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except StabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
