"""Command-line entry point.

Exit codes: 0 success, 2 model error, 3 configuration error, 4 inference
failure.  Mode labels on the command line and in output files are 1-based.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import serialize
from .excitation import (
    collect_observations,
    dumps_observations,
    exact_observations,
    load_observations,
    standard_basis,
)
from .fixtures import FIXTURE_ENV, resolve_model_path
from .linalg import DEFAULT_RANK_TOL
from .model import (
    ModelError,
    StabilityWarning,
    format_switches,
    load_model,
    mean_square_stable,
    minimality_check,
    parse_switches,
    simulate_random,
    simulate_with_switches,
    validate_model,
    worst_case_sample_bound,
)
from .modes import PFConfig, estimate_modes
from .realization import (
    SCAN_COLUMNS,
    NonTriangularRankError,
    SaturationError,
    check_saturation,
    assumption4_diagnostic,
    controllability_rank,
    infer_state_dim,
    observability_rank,
    rank_saturation_scan,
    saturation_summary,
)

EXIT_MODEL, EXIT_CONFIG, EXIT_INFERENCE = 2, 3, 4


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _load(args):
    path = resolve_model_path(args.model)
    model = load_model(path)
    report = validate_model(model)
    if not report.ok:
        raise ModelError("invalid model: " + "; ".join(report.issues))
    return model


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _observations(args, model):
    if getattr(args, "observations", None):
        return load_observations(args.observations)
    T = args.T if args.T is not None else model.n ** 2 + model.n - 1
    basis = standard_basis(model.p, T)
    if args.mode == "exact":
        return exact_observations(model, basis, T)
    return collect_observations(model, basis, T, args.N, args.seed)


# ------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    model = _load(args)
    if args.switches is not None:
        tail = parse_switches(args.switches)
        horizon = 2 * args.T if args.T is not None else tail.size + 1
        if tail.size < horizon - 1:
            raise ConfigError(f"--switches needs at least {horizon - 1} entries for horizon {horizon}")
        if tail.size and tail.max() >= model.s:
            raise ConfigError(f"switch label {tail.max() + 1} exceeds s={model.s}")
        # theta(0) multiplies x_0 = 0, so its value never shows in the outputs
        switches = np.concatenate([[0], tail])[:horizon]
    else:
        horizon = 2 * (args.T if args.T is not None else 1)
        switches = None
    u = np.zeros((horizon, model.p))
    if args.impulse:
        u[0] = 1.0
    elif args.inputs:
        vals = np.array([float(x) for x in args.inputs.split(",") if x.strip()])
        if vals.size % model.p or vals.size // model.p > horizon:
            raise ConfigError("--inputs must hold at most horizon * p comma-separated values")
        u[: vals.size // model.p] = vals.reshape(-1, model.p)
    if switches is None:
        traj = simulate_random(model, u, horizon, args.seed)
    else:
        traj = simulate_with_switches(model, switches, u)
    labels = format_switches(traj.switches)
    if args.format == "csv":
        header = ["k", "theta"] + [f"u{i + 1}" for i in range(model.p)] + [f"y{i + 1}" for i in range(model.m)]
        rows = [[k + 1, labels[k], *traj.inputs[k], *traj.outputs[k]] for k in range(horizon)]
        _emit(args, serialize.csv_table(header, rows))
    else:
        _emit(args, serialize.dumps({
            "command": "simulate",
            "horizon": horizon,
            "seed": None if switches is not None else args.seed,
            "switches": labels,
            "inputs": traj.inputs,
            "outputs": traj.outputs,
        }))
    return 0


def cmd_excite(args) -> int:
    model = _load(args)
    obs = _observations(args, model)
    _emit(args, dumps_observations(obs, args.format))
    return 0


def cmd_estimate_dim(args) -> int:
    model = None if args.observations else _load(args)
    obs = _observations(args, model)
    report = infer_state_dim(obs.Y, args.tol, T=obs.T)
    if model is not None and obs.mode == "exact":
        check_saturation(model, obs.T, args.tol)
    if model is not None:
        report.r_B = controllability_rank(model)
        report.r_C = observability_rank(model)
    _emit(args, serialize.dumps({"command": "estimate-dim", **obs.metadata(), **report.to_dict()}))
    return 0


def cmd_estimate_modes(args) -> int:
    model = None
    if args.model:
        model = _load(args)
    elif not args.observations:
        raise ConfigError("either --model or --observations is required")
    if args.factorization == "oracle" and model is None:
        raise ConfigError("--factorization oracle needs --model")
    obs = _observations(args, model)
    cfg = PFConfig(b=args.b, max_iter=args.max_iter, starts=args.starts, seed=args.seed,
                   rank_tol=args.rank_tol)
    sol = estimate_modes(obs, tol=args.tol, config=cfg, factorization=args.factorization,
                         model=model, n=args.n)
    _emit(args, serialize.dumps({"command": "estimate-modes", **obs.metadata(), **sol.to_dict()}))
    return 0


def cmd_check(args) -> int:
    model = _load(args)
    stable, rho = mean_square_stable(model)
    mini = minimality_check(model)
    T = args.T if args.T is not None else model.n ** 2 + model.n - 1
    a4 = assumption4_diagnostic(model, T, args.tol)
    payload = {
        "command": "check",
        "n": model.n, "m": model.m, "p": model.p, "s": model.s,
        "r_B": controllability_rank(model),
        "r_C": observability_rank(model),
        "mean_square_stable": stable,
        "spectral_radius_S": rho,
        "mode_span_rank": mini.rank,
        "mode_span_minimal": mini.rank == model.s,
        "assumption4": a4.to_dict(),
    }
    if args.switches is not None:
        seq = parse_switches(args.switches)
        if seq.size and seq.max() >= model.s:
            raise ConfigError(f"switch label {seq.max() + 1} exceeds s={model.s}")
        payload["sample_bound_sequence"] = format_switches(seq)
        payload["worst_case_sample_bound"] = worst_case_sample_bound(model, seq)
    _emit(args, serialize.dumps(payload))
    return 0


def cmd_scan(args) -> int:
    model = _load(args)
    T_max = args.T if args.T is not None else model.n ** 2 + model.n + 2
    rows = rank_saturation_scan(model, T_max, args.tol)
    if args.format == "json":
        _emit(args, serialize.dumps({
            "command": "scan",
            "rows": [{**{c: getattr(r, c) for c in SCAN_COLUMNS}, "rank_B_sym": r.rank_B_sym} for r in rows],
            "saturation": saturation_summary(rows),
        }))
    else:
        _emit(args, serialize.csv_table(list(SCAN_COLUMNS), [[getattr(r, c) for c in SCAN_COLUMNS] for r in rows]))
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="jlsrealize",
        description="Minimal realization (state dimension, mode count) of jump linear systems.",
        epilog=f"Model names that are not existing paths are looked up in ${FIXTURE_ENV} "
               "(default: the bundled fixtures).",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model_required=True, fmt=("json",)):
        p.add_argument("--model", required=model_required, help="model JSON file or fixture name")
        p.add_argument("--output", help="output file (default stdout)")
        p.add_argument("--format", choices=fmt, default=fmt[0])
        p.add_argument("--tol", type=_positive_float, default=DEFAULT_RANK_TOL, help="relative rank tolerance")
        p.add_argument("--seed", type=int, default=0)

    def excitation(p):
        p.add_argument("--T", type=_positive_int, help="excitation horizon (default n^2 + n - 1)")
        p.add_argument("--N", type=_positive_int, default=10_000, help="copies per input (monte-carlo)")
        p.add_argument("--mode", choices=("exact", "monte-carlo"), default="exact")

    p = sub.add_parser("simulate", help="simulate one trajectory")
    common(p, fmt=("json", "csv"))
    p.add_argument("--T", type=_positive_int, help="half horizon; the run lasts 2T steps")
    p.add_argument("--switches", help="comma-separated 1-based modes theta(1), theta(2), ...")
    p.add_argument("--impulse", action="store_true", help="u_0 = 1 on every channel, zero after")
    p.add_argument("--inputs", help="comma-separated stacked inputs u_0, u_1, ...")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("excite", help="write the observation pair (Y_O, Y_O^+)")
    common(p, fmt=("json", "csv"))
    excitation(p)
    p.set_defaults(func=cmd_excite)

    p = sub.add_parser("estimate-dim", help="infer the state dimension from rank(Y_O)")
    common(p, model_required=False)
    excitation(p)
    p.add_argument("--observations", help="observation bundle instead of a model")
    p.set_defaults(func=cmd_estimate_dim)

    p = sub.add_parser("estimate-modes", help="estimate the number of modes")
    common(p, model_required=False)
    excitation(p)
    p.add_argument("--observations", help="observation bundle instead of simulating")
    p.add_argument("--factorization", choices=("oracle", "blind"), default="oracle")
    p.add_argument("--n", type=_positive_int, help="state dimension (skips rank inference)")
    p.add_argument("--b", type=_positive_float, help="trace normalisation of Z (default n^2)")
    p.add_argument("--max-iter", type=_positive_int, default=200)
    p.add_argument("--starts", type=_positive_int, default=8)
    p.add_argument("--rank-tol", type=_positive_float, default=1e-6,
                   help="relative eigenvalue threshold for rank(P*); widen for Monte Carlo data")
    p.set_defaults(func=cmd_estimate_modes)

    p = sub.add_parser("check", help="model diagnostics")
    common(p)
    p.add_argument("--T", type=_positive_int, help="horizon for the assumption-4 diagnostic")
    p.add_argument("--switches", help="sequence for the worst-case sample bound (1-based)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("scan", help="rank of the expectation operators against T")
    common(p, fmt=("csv", "json"))
    p.add_argument("--T", type=_positive_int, help="largest horizon (default n^2 + n + 2)")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", StabilityWarning)
            return args.func(args)
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, (NonTriangularRankError, SaturationError)):
            print(f"inference failed: {exc}", file=sys.stderr)
            return EXIT_INFERENCE
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
