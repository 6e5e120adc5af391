"""Command line interface: ``otmaps <subcommand> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .grid import Grid, ScalarField, unit_box
from .harness import ConfigError, ExperimentConfig, emit, fit_rates, mse, read_records, run_experiment
from .kernel import KernelParams, fit as kernel_fit, oracle_select
from .models import load_model, save_model
from .ot import matching_map, one_nn_extend, solve_assignment
from .semidual import OptimizerOptions, WaveletMap, fit_wavelet, select_scale, stability_certificate
from .synthetic import derive_seed, draw_pair, make_problem, sample_source, samples_from_dict, samples_to_dict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _problem(args):
    params = _json_arg(args.problem_params, "--problem-params") if args.problem_params else {}
    try:
        return make_problem(args.problem, args.d, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _json_arg(text, name):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name} is not valid JSON: {exc}") from exc


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _read_samples(path):
    try:
        return samples_from_dict(_read_json(path))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path} is not a sample set: {exc}") from exc


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj))


def _add_problem(p, required=True):
    p.add_argument("--problem", required=required, choices=["id", "exp", "bump"])
    p.add_argument("--d", type=int, required=required)
    p.add_argument("--problem-params", help="JSON object of bump parameters (m, kappa, tau, seed)")


def cmd_gen(args):
    problem = _problem(args)
    if args.target_out:
        X, Y = draw_pair(problem, args.n, args.seed)
        _write_json(args.target_out, samples_to_dict(Y))
    else:
        X = sample_source(problem, args.n, args.seed)
    _write_json(args.out, samples_to_dict(X))
    return EXIT_OK


def cmd_fit(args):
    X, Y = _read_samples(args.x), _read_samples(args.y)
    if X.shape != Y.shape:
        raise ConfigError(f"source and target samples differ in shape: {X.shape} vs {Y.shape}")
    problem = _problem(args) if args.problem else None
    if args.estimator == "matching":
        model = matching_map(solve_assignment(X, Y), X, Y)
        if args.extend:
            model = one_nn_extend(model)
    elif args.estimator == "kernel":
        matched = matching_map(solve_assignment(X, Y), X, Y)
        if args.nu_kernel is not None and args.nu_ridge is not None:
            model = kernel_fit(X, matched.values, KernelParams(args.nu_kernel, args.nu_ridge))
        else:
            if problem is None:
                raise ConfigError("oracle kernel selection needs --problem and --d (or give --nu-kernel and --nu-ridge)")
            holdout = sample_source(problem, len(X), derive_seed(args.seed, len(X), 1))
            _, model = oracle_select(X, matched.values, holdout, problem.eval_T0)
    else:
        if problem is None:
            raise ConfigError("the wavelet estimator needs --problem and --d for its boxes")
        opts = OptimizerOptions(max_iters=args.max_iters)
        if args.scale is None:
            model, _ = select_scale(X, Y, problem, args.grid_n, None, opts, not args.no_envelope)
        else:
            model = fit_wavelet(
                X, Y, problem.source_box, problem.target_box, args.grid_n, args.scale, opts, not args.no_envelope, args.seed
            )
    save_model(model, args.out)
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args.model)
    X = _read_samples(args.samples)
    print(repr(mse(model, _problem(args), X)))
    return EXIT_OK


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"{path} is not a model file: {exc}") from exc


def cmd_experiment(args):
    config = ExperimentConfig.load(args.config)
    out = Path(args.out or config.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    records = run_experiment(config, workers=args.workers)
    emit(records, "csv", out / "results.csv")
    emit(records, "json", out / "results.json")
    failed = sum(r.failed for r in records)
    print(f"{len(records)} records written to {out / 'results.csv'} ({failed} failed)")
    return EXIT_OK


def _records(path):
    try:
        return read_records(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_rates(args):
    rates = fit_rates(_records(args.results))
    if not rates:
        raise ValueError("no series has two sample sizes with valid medians")
    emit(rates, "json" if str(args.out).endswith(".json") else "csv", args.out)
    for r in rates:
        print(f"{r.problem} {r.estimator}: slope {r.slope:.3f} (r^2 {r.r_squared:.3f})")
    return EXIT_OK


def cmd_plot(args):
    emit(_records(args.results), "svg", args.out)
    return EXIT_OK


def cmd_certify(args):
    model = _load_model(args.model)
    if not isinstance(model, WaveletMap) or model.potential is None:
        raise ConfigError("certify needs a wavelet model that stores its potential")
    problem = _problem(args)
    f = model.potential
    f0 = ScalarField.from_function(f.grid, problem.eval_f0)
    quad = Grid(unit_box(problem.d), ((f.grid.n + 1) // 2) | 1)
    density = ScalarField(quad, np.ones(quad.size))
    report = stability_certificate(f, f0, density, args.M)
    print(json.dumps({**report.__dict__, "ok": report.ok}))
    return EXIT_OK if report.ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otmaps", description="Smooth optimal transport map estimation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="draw a source sample (and optionally a target sample)")
    _add_problem(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--target-out", help="also write T0 applied to an independent source draw")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit an estimator to a sample pair")
    p.add_argument("--estimator", required=True, choices=["wavelet", "kernel", "matching"])
    p.add_argument("--x", required=True, help="source sample JSON")
    p.add_argument("--y", required=True, help="target sample JSON")
    _add_problem(p, required=False)
    p.add_argument("--grid-n", type=int, default=65)
    p.add_argument("--scale", type=int, help="wavelet scale J (default: oracle selection)")
    p.add_argument("--no-envelope", action="store_true", help="differentiate the raw potential")
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--nu-kernel", type=float)
    p.add_argument("--nu-ridge", type=float)
    p.add_argument("--extend", action="store_true", help="install the 1-NN extension on a matching model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="MSE of a model against the true map")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True)
    _add_problem(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a rate experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("rates", help="fit log-log rates to a results CSV")
    p.add_argument("results")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("plot", help="log-log SVG of a results CSV")
    p.add_argument("results")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("certify", help="stability certificate of a fitted wavelet potential")
    p.add_argument("--model", required=True)
    _add_problem(p)
    p.add_argument("--M", type=float, required=True)
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"otmaps: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"otmaps: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"otmaps: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
